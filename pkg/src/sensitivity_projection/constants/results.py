#################################
# Results columns and variables #
#################################

CURVE_COLUMNS = [
    'gamma',
    'estimate',
    'variance',
    'ci_lo',
    'ci_hi',
    'projected',
]
# per-arm means E[Y(1)] and E[Y(0)] alongside the ACE curve
ARM_CURVE_COLUMNS = ['gamma', 'target'] + CURVE_COLUMNS[1:]

BOUNDS_COLUMNS = [
    'eta2',
    'rho',
    'tau_s',
    'tau_lo',
    'tau_hi',
    'var_lo',
    'var_hi',
    'projected',
]

MC_KEY_COLUMNS = [
    'kind',
    'n',
    'parameter',
    'value',
    'variant',
    'target',
]
MC_VALUE_COLUMNS = [
    'mean_estimate',
    'mean_variance',
    'reps',
    'failures',
    'mean_sweeps',
]
MC_COLUMNS = MC_KEY_COLUMNS + MC_VALUE_COLUMNS

# estimates to significant digits, variances to fixed decimals
ESTIMATE_FORMAT = '{:.4g}'
VARIANCE_FORMAT = '{:.4f}'
ESTIMATE_COLUMNS = ['value', 'mean_estimate', 'mean_sweeps']
VARIANCE_COLUMNS = ['mean_variance']

CURVE_FILE = 'curve.csv'
ARM_CURVE_FILE = 'arm_curves.csv'
BOUNDS_FILE = 'bounds.csv'
TABLE_FILE = 'table'
SUMMARY_FILE = 'summary.json'
