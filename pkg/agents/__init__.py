# agents/__init__.py
from .detector_agent import DetectorAgent, create_detector_agent

__all__ = ['DetectorAgent', 'create_detector_agent']
