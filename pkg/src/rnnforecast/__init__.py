"""Recurrent and attention forecasters for daily OHLCV data, built on a
small float64 reverse-mode autodiff core."""

from .autodiff import Tape, Tensor, backward, grad_check
from .cells import GruParams, InitSpec, LstmParams, LstmState, gru_step, init_params, lstm_step
from .market import PriceSeries, Scaler, SplitDataset, make_windows, parse_csv, split_anchored
from .zoo import MODEL_NAMES, ForecastModel, ModelSpec, build, predict_recursive, spec_for

__version__ = "0.1.0"
