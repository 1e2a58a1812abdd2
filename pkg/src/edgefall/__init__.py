"""edgefall: LSTM fall detection on wrist sensor data, with sensor
ablation, knowledge distillation, and power-aware configuration selection.
"""

__version__ = "0.1.0"

from .sensors import SensorKind, SensorSet, all_sensor_sets

__all__ = ["SensorKind", "SensorSet", "all_sensor_sets", "__version__"]
