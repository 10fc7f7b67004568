from app.services.harness.runner import ScenarioReport, ScenarioRunner, StepResult, run_scenario
from app.services.harness.scenario import ScenarioAction, ScenarioEvent, ScenarioFile, load_scenario, parse_scenario
from app.services.harness.topology import Topology, build_node_configs, free_port
