import java.util.ArrayList;

public class OrderA {
  int fill(ArrayList list, String s) {
    StringBuilder sb = new StringBuilder();
    list.add(s);
    sb.append(s);
    list.clear();
    sb.setLength(0);
    return list.size() + sb.length();
  }
}
