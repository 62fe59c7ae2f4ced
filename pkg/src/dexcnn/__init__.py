"""Android malware detection and family attribution from raw API call sequences."""

from .apk import ApkPackage, extract_dex, open_apk
from .dex import ApiCallSequence, DexFile, MethodRef, extract_call_sequence, format_method_ref, parse_dex
from .manifest import AppRecord, CorpusManifest, load_manifest
from .metrics import ConfusionCounts, MetricsReport, compute_metrics
from .nn import Hyperparams, ModelParams, backward, compute_loss, forward, init_params, predict, train
from .sequences import ApiDictionary, block_shuffle, build_dictionary, discretize, unify

__version__ = "0.1.0"

__all__ = [
    "ApkPackage", "extract_dex", "open_apk",
    "ApiCallSequence", "DexFile", "MethodRef", "extract_call_sequence", "format_method_ref", "parse_dex",
    "AppRecord", "CorpusManifest", "load_manifest",
    "ConfusionCounts", "MetricsReport", "compute_metrics",
    "Hyperparams", "ModelParams", "backward", "compute_loss", "forward", "init_params", "predict", "train",
    "ApiDictionary", "block_shuffle", "build_dictionary", "discretize", "unify",
]
