from .birthdeath import TrajectoryModel, birth_death_moment_start, birth_death_spec, build_birth_death
from .gamma import (build_gamma_fixed_rate, build_mvgamma, gamma_correction_closed_form,
                    gamma_discrepancy_closed_form, gamma_fixed_rate_spec, log_minus_digamma,
                    mvgamma_spec, stirling_remainder, true_loglik_gamma, true_loglik_gamma_grad,
                    true_loglik_mvgamma, true_loglik_mvgamma_grad)
from .io import read_observation_csv, read_trajectory, write_observation_csv
from .mtalpha import (MtAlphaDesign, MtAlphaOracle, build_mtalpha, latent_solutions,
                      mtalpha_moment_start, mtalpha_spec, mtalpha_true_loglik_oracle,
                      simulate_mtalpha, split_matrix)
