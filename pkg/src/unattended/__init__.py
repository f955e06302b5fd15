"""Firmware extraction and analysis for unattended IoT devices.

JTAG pin-out discovery and memory readout, SPI flash dumping and bus
transcript reconstruction, firmware carving, DES-ECB partition decryption,
config extraction, lock-code scanning and password-hash reversal.
"""

from .errors import UnattendedError
from .spi import (FlashDevice, FlashGeometry, FlashImage, SimulatedDriver, SpiCommand, Transcript,
                  decode_transaction, dump_image, encode_command, reconstruct_from_transcript)
from .jtag import (Cable, JtagTarget, PinHarness, TapState, enumerate_pins, read_idcode, read_memory,
                   tap_next)
from .pinout import MeasurementMatrix, PinMap, infer_pinout, validate_matrix
from .carver import Region, carve, entropy_profile, find_string, high_entropy_regions, scan_signatures
from .des import des_ecb
from .pipeline import (ConfigRecord, LockCodes, decrypt_partition, derive_des_key, extract_config,
                       inflate_zlib, scan_codes)
from .rainbow import (RainbowTable, TableParams, build_table, build_table_set, dictionary_attack,
                      lookup, reduce, salted_lookup_demo)
from .casefile import CaseFile, EvidenceRecord, generate_report

__version__ = "0.1.0"
