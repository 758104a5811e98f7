"""Gate-level model of dual-rail NCL pipelines with selective (LSU-shared) redundancy.

Build netlists (``build``), simulate them event by event (``sim``), inject
single-event upsets (``faults``) and score area/latency/image quality
(``metrics``). The ``srncl`` command wraps all of it.
"""

from .build import build_dmr_ncl_cla, build_ncl_cla, build_pipeline, build_plain_ncl, build_sr_ncl_cla
from .faults import FaultSpec, enumerate_sites, invert_carry_rail, run_campaign, run_single_fault_experiment
from .metrics import approximate_add, approximate_add32, classify_quality, process_image, psnr, ssim
from .ncl import DualRailValue, GateSpec, NetlistError, decode, encode_bit
from .netlist import Netlist, PartitionSpec, estimate_transistors
from .sim import DelayModel, Simulator, init_reset, run_pipeline

__version__ = "0.1.0"
