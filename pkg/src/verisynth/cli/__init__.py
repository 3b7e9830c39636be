from .bench import generate_benchmark, grid_pomdp, maze_pomdp, navigation_pomdp
from .main import EXIT_ERROR, EXIT_OK, EXIT_VIOLATED, RunConfig, build_parser, load_model, main
