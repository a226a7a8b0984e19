public interface OnlyAbstract {
  void run();
  int size(String key);
}
