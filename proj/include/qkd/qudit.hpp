#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <iosfwd>
#include <vector>

namespace qkd {

/// d complex probability amplitudes; unit norm for physical states.
using StateVector = Eigen::VectorXcd;

enum class Basis { Time, Phase };

struct StateId {
    Basis basis = Basis::Time;
    int index = 0;
};

constexpr double kAlgebraTol = 1e-12;

/// |t_n>: amplitude 1 in time bin n, 0 elsewhere.
StateVector time_state(int n, int d);

/// |f_n>: the DFT superposition with amplitudes exp(2*pi*i*n*m/d)/sqrt(d).
StateVector phase_state(int n, int d);

/// <a|b>, conjugate-linear in the first argument.
std::complex<double> overlap(const StateVector& a, const StateVector& b);

bool is_normalized(const StateVector& v, double tol = kAlgebraTol);

/// c = -log2 max_{i,j} |<f_i|t_j>|^2 from explicit state vectors.
/// Ideal states give log2(d).
double overlap_parameter(const std::vector<StateVector>& phase_states,
                         const std::vector<StateVector>& time_states);

/// Calibration mode: c from a measured 2d x 2d detection-probability matrix
/// (rows = prepared t_0..t_{d-1}, f_0..f_{d-1}; columns = measured outcomes
/// in the same order). The worst cross-basis element sets c.
double overlap_parameter(const Eigen::MatrixXd& probability_matrix);

/// Conditional detector distribution of a phase-basis measurement; lets the
/// interferometer simulation stand in for the ideal projective case.
using PhaseMeasurement = std::function<Eigen::VectorXd(const StateVector&)>;

/// 2d x 2d detection-probability matrix for all prepared states measured in
/// both bases (ideal projective measurements).
Eigen::MatrixXd probability_matrix(int d);

/// Same, with the phase-basis column block produced by `phase_meas`.
Eigen::MatrixXd probability_matrix(int d, const PhaseMeasurement& phase_meas);

/// Row-major CSV with 17 significant digits (lossless double round-trip).
void write_matrix_csv(const Eigen::MatrixXd& m, std::ostream& os);
Eigen::MatrixXd read_matrix_csv(std::istream& is);

}  // namespace qkd
