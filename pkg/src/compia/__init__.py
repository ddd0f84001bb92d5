"""Compressive initial access for mmWave links.

Joint cell detection, timing acquisition, and CFO-robust compressive
beam training from pseudorandom sounding beams, with the matching
closed-form theory (detection thresholds, miss rates, angle CRLB,
latency/overhead models) and a directional-sweep benchmark.
"""

from .config import (ChannelRealization, FrameConfig, RngStream, SyncState,
                     default_frame_config, derive_stream, validate_config)
from .waveform import PssSequence, zadoff_chu, m_sequence, assemble_stream
from .channel import (ArrayGeometry, RxCapture, steering_vector,
                      synthesize_capture, draw_channel, post_bf_snr)
from .codebook import (Codebook, pseudorandom_codebook, sector_codebook,
                       beam_pair_schedule, invert_burst_index)
from .detection import DetectionResult, pss_correlate, detect_pt, detect_nt, detect_dia
from .theory import (detection_threshold, miss_detection_rate, snr_degradation,
                     fisher_information, crlb_angles, access_latency,
                     overhead_ratio, baseband_op_counts)
from .training import (Dictionaries, TrainingEstimate, build_dictionaries,
                       matching_pursuit, refine_estimate, run_initial_access,
                       hierarchical_beam_search)
from .harness import (Scenario, ResultRow, run_discovery_sweep,
                      run_training_sweep, run_latency_overhead, selftest)

__version__ = "0.1.0"
