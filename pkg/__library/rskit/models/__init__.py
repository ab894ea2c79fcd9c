from .config import *
from .data import *
from .results import *
