from .app import create_app, serve
from .store import CaseRecord, RegistryEntry, TrainJob, Workspace

__all__ = ["Workspace", "CaseRecord", "TrainJob", "RegistryEntry", "create_app", "serve"]
