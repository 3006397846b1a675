from .tensor import Tensor
from .layers import BatchNorm2d, Conv2d, Parameter, ReLU, ResidualBlock
from .network import Network, NetworkConfig
from .loss import l2_loss
from .optim import Adam

__all__ = [
    "Tensor", "Conv2d", "BatchNorm2d", "ReLU", "ResidualBlock", "Parameter",
    "Network", "NetworkConfig", "l2_loss", "Adam",
]
