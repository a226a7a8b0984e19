"""Type-usage extraction and API usage diversity metrics for Java bytecode."""

from .classfile import ClassFile, MalformedClassFile, parse_class, parse_descriptor, parse_jar
from .diversity_map import DiversityMap, build_map, connected_components, emit_dot
from .extractor import ExtractConfig, TypeUsageInstance, extract_class, simulate_method, split_basic_blocks
from .facts import EcosystemStore, TypeUsageKind, aggregate, dedup_jars, merge
from .metrics import ClassMetrics, class_metrics, discordant_fraction, distribution_summary, spearman

__version__ = "0.1.0"
