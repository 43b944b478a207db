from .tensor import Tensor, grad, set_default_dtype, default_dtype, parameter, constant
from .params import ParamStore, gradients, adam_step
from .losses import (
    kl_gaussian, binary_cross_entropy, categorical_cross_entropy, mean_squared_error,
)
from .layers import (
    LayerSpec, Context, make_layer, Dense, Embedding, LSTM, BiLSTM, Conv1D,
    Conv1DTranspose, MaxPool1D, GlobalAvgPool1D, BatchNorm1D, Dropout, dropout,
    MultiHeadAttention, RepeatVector, apply_updates,
)
