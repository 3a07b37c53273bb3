from pathlib import Path
from threading import Lock
from typing import Any, Dict, Optional

from utils import setup_logger


class BaseModelModule:
    def __init__(self, model_name: str, device: str = "cpu", version: str = "latest"):
        """
        Args:
            model_name (str): The name of the model.
            device (str): The torch device used for training (e.g. 'cpu').
            version (str): Model version recorded in exported metadata.
        """
        self.model_name = model_name
        self.device = device
        self.version = version

        self.logger = setup_logger(f"wisp.{self.__class__.__name__}")

        # loaded model with its call lock
        self.model_info: Optional[Dict[str, Any]] = None

    def load_model(self, path: Optional[Path] = None, model: Any = None, **kwargs):
        """Load a model instance from ``path``, or adopt an in-memory ``model``."""
        if model is None:
            model = self._load_model_on_device(self.device, path, **kwargs)
        if model is None:
            raise RuntimeError("Model could not be loaded")
        self.model_info = {
            'model': model,
            'calls': 0,
            'lock': Lock(),
        }
        return model

    def _load_model_on_device(self, device: str, path: Optional[Path], **kwargs) -> Any:
        """
        Load a single model instance.
        Subclass must implement this method.

        Args:
            device: Target device
            path: Location of the serialized model
            **kwargs: Model specific parameters
        Returns:
            Loaded model instance
        """
        raise NotImplementedError("Subclass must implement _load_model_on_device method")

    def forward(self, model: Any, **kwargs) -> Any:
        raise NotImplementedError("Subclass must implement forward method")

    def __call__(self, **kwargs) -> Any:
        if not self.model_info:
            raise RuntimeError("No model loaded. Call load_model first.")

        with self.model_info['lock']:
            self.model_info['calls'] += 1
        return self.forward(self.model_info['model'], **kwargs)

    @property
    def model(self) -> Any:
        return self.model_info['model'] if self.model_info else None
