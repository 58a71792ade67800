from .layers import Conv1D, Dense, Flatten, MaxPool1D, ReLU
from .network import (NetworkConfig, SummaryNetwork, default_network_config,
                      network_forward, predict_theta)
from .train import AdamConfig, TrainConfig, adam_update, train_summary_network

__all__ = [
    "Conv1D", "Dense", "Flatten", "MaxPool1D", "ReLU",
    "NetworkConfig", "SummaryNetwork", "default_network_config",
    "network_forward", "predict_theta",
    "AdamConfig", "TrainConfig", "adam_update", "train_summary_network",
]
