from .config import GatewayConfig, config_from_dict, load_config
from .orchestrator import Gateway, TickReport

__all__ = ["Gateway", "GatewayConfig", "TickReport", "config_from_dict", "load_config"]
