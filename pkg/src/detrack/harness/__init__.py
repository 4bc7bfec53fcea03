from .gradcheck import gradcheck_all
from .pipeline import fuse_clip, run_pipeline, run_tracker
from .scenario import Scenario, ScenarioConfig, generate_scenario

__all__ = ["Scenario", "ScenarioConfig", "fuse_clip", "generate_scenario", "gradcheck_all", "run_pipeline", "run_tracker"]
