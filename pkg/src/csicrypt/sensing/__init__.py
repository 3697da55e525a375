"""Gesture features, the frozen classifier and the keyed sub-model."""
from .classifier import ClassifierConfig, ClassifierR, infer, infer_batch, train_classifier
from .features import (FeatureConfig, FeatureMap, FeaturePipeline, Resampler,
                       dominant_frequency_track, extract_features, ridge_to_background,
                       standardized_input)
from .keys import key_embed
from .submodel import (GradCheckReport, LinearToy, SubmodelConfig, SubmodelDataset,
                       SubmodelF, SubmodelTrainConfig, TrainRun, grad_check, surrogate,
                       surrogate_batch, train_submodel)
