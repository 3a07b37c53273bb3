from .base import BaseModelModule
from .predictor import RejectionClassifier, RejectionPredictorModule

__all__ = ['BaseModelModule', 'RejectionClassifier', 'RejectionPredictorModule']
