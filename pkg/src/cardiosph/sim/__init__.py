"""Scene files, the coupled time loop, oracles, outputs and the CLI."""
from .config import SceneConfig, dump_scene, load_scene, load_scene_file, scene_from_dict, scene_to_dict, validate
from .runner import RunResult, Simulation, build_geometry, run
