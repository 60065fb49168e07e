"""Central table of numerical tolerances and scheme defaults.

Every tolerance used by the package lives here so that config files can
override any of them in one place (section ``[tolerances]``).
"""

DEFAULTS = {
    # linear algebra
    "degeneracy_tol": 1e-8,          # smallest acceptable singular/eigen value
    "condition_limit": 1e8,          # Gram-solve condition number cutoff
    # cell problem
    "centering_tol": 1e-4,           # |int b dmu| allowed before hard failure
    "density_norm_tol": 1e-6,        # invariant density normalization check
    "tail_mass_ratio": 1e-8,         # density at +-L relative to its max
    "default_domain_sigmas": 8.0,    # truncation half-width in std devs
    "poisson_grid_n": 4097,          # default 1-d cell-problem grid
    # fractional / Young integration
    "young_alpha_margin": 0.05,      # alpha = 1 - H + margin for fBm integrators
    # simulation
    "substep_factor": 10.0,          # dt_fast resolves eta/substep_factor
    "max_substeps": 4096,
    # rate evaluation
    "u2_bins": 64,                   # mu-quantile bins for feedback controls
    "admissibility_decade": 10,      # grid points inspected near t = 0
    "admissibility_exponent": 1.05,  # psi(t)/t^a boundedness heuristic
    "admissibility_factor": 4.0,
    # Monte Carlo
    "min_trials": 1000,
    "pilot_fraction": 0.02,
    "wilson_z": 1.959963984540054,   # 95% interval
}


def tolerances(overrides=None):
    """Return a copy of the defaults, updated with per-config overrides."""
    table = dict(DEFAULTS)
    if overrides:
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        table.update(overrides)
    return table
