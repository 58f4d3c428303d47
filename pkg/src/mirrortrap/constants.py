"""Physical constants and the published operating point of the mirror trap."""

from scipy import constants as _c

E_CHARGE = _c.e
AMU = _c.physical_constants["atomic mass constant"][0]

# Operating voltages [V]; V1 and V5 are the static DC offsets of the end segments.
TABLE_I_VOLTAGES = {"V1": 0.35, "V2": 819.20, "V3": 541.00, "V4": 712.75, "V5": 0.50}

# Reference point of the linear null-position model.  It differs from the
# operating point only in V4 (708.00 V instead of 712.75 V).
REFERENCE_VOLTAGES = {"V1": 0.35, "V2": 819.20, "V3": 541.00, "V4": 708.00, "V5": 0.50}

RF_FREQUENCY_MHZ = 20.0
ION_MASS_AMU = 171.0
ION_CHARGE = 1

# Linear null-position model at the reference point.
REFERENCE_NULL_MM = 2.100
VOLTAGE_SLOPES_UM_PER_V = {"V2": -0.6175, "V3": 0.3991, "V4": 0.4059}
EDGE_SLOPES = {
    "1_up": 0.9355,
    "2_down": 1.2364,
    "2_up": 0.0235,
    "3_down": 0.0322,
    "3_up": -0.0071,
    "4_down": -0.0719,
    "4_up": 0.1516,
    "5_down": 0.1066,
}
REFERENCE_EDGES_MM = {
    "1_up": 0.256,
    "2_down": 0.296,
    "2_up": 1.096,
    "3_down": 1.136,
    "3_up": 1.900,
    "4_down": 2.300,
    "4_up": 3.000,
    "5_down": 3.040,
}
# Validity windows of the linear model [V] and [mm].
VOLTAGE_RANGES = {"V2": (739.2, 899.2), "V3": (461.0, 621.0), "V4": (628.0, 788.0)}
EDGE_RANGES_MM = {
    "1_up": (0.216, 0.256),
    "2_down": (0.296, 0.336),
    "2_up": (1.016, 1.096),
    "3_down": (1.136, 1.436),
    "3_up": (1.840, 1.960),
    "4_down": (2.150, 2.450),
    "4_up": (2.700, 3.000),
    "5_down": (3.040, 3.120),
}

# Quoted trap figures used for comparison reports.
PAPER_RADIAL_CURVATURE = 0.0348  # eV/mm^2
PAPER_AXIAL_CURVATURE = 0.1391  # eV/mm^2
PAPER_RADIAL_FREQ_KHZ = 31.6
PAPER_AXIAL_FREQ_KHZ = 63.1
DC_SLOPES_UM_PER_V = (-1495.0, -1495.0, -1052.0)
