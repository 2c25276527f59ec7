from .benchmark import Benchmark, BenchmarkSummary
from .explore import Explore
from .render import RenderViewQuality
from .world import GenerateWorld
