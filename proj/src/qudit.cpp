#include "qkd/qudit.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qkd {

namespace {

void check_dim(int d) {
    if (d < 2) throw std::invalid_argument("state dimension must be >= 2");
}

void check_index(int n, int d) {
    check_dim(d);
    if (n < 0 || n >= d) throw std::out_of_range("basis index out of range");
}

}  // namespace

StateVector time_state(int n, int d) {
    check_index(n, d);
    StateVector v = StateVector::Zero(d);
    v[n] = 1.0;
    return v;
}

StateVector phase_state(int n, int d) {
    check_index(n, d);
    StateVector v(d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int m = 0; m < d; ++m) {
        const double angle = 2.0 * M_PI * n * m / d;
        v[m] = std::polar(scale, angle);
    }
    return v;
}

std::complex<double> overlap(const StateVector& a, const StateVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("overlap: dimension mismatch");
    return a.dot(b);  // Eigen's dot conjugates the first argument
}

bool is_normalized(const StateVector& v, double tol) {
    return std::abs(v.squaredNorm() - 1.0) <= tol;
}

double overlap_parameter(const std::vector<StateVector>& phase_states,
                         const std::vector<StateVector>& time_states) {
    if (phase_states.empty() || time_states.empty())
        throw std::invalid_argument("overlap_parameter: empty state list");
    const auto dim = phase_states.front().size();
    double worst = 0.0;
    for (const auto& f : phase_states) {
        if (f.size() != dim) throw std::invalid_argument("overlap_parameter: dimension mismatch");
        if (f.squaredNorm() < kAlgebraTol) throw std::invalid_argument("overlap_parameter: zero-norm state");
        for (const auto& t : time_states) {
            if (t.size() != dim) throw std::invalid_argument("overlap_parameter: dimension mismatch");
            if (t.squaredNorm() < kAlgebraTol) throw std::invalid_argument("overlap_parameter: zero-norm state");
            worst = std::max(worst, std::norm(overlap(f, t)));
        }
    }
    return -std::log2(worst);
}

double overlap_parameter(const Eigen::MatrixXd& probability_matrix) {
    const auto rows = probability_matrix.rows();
    if (rows < 4 || rows % 2 != 0 || probability_matrix.cols() != rows)
        throw std::invalid_argument("overlap_parameter: matrix must be 2d x 2d");
    const auto d = rows / 2;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < rows; ++j) {
            const double p = probability_matrix(i, j);
            if (p < -kAlgebraTol || p > 1.0 + 1e-9)
                throw std::invalid_argument("overlap_parameter: entry outside [0, 1]");
            const bool cross = (i < d) != (j < d);
            if (cross) worst = std::max(worst, p);
        }
    }
    if (worst <= 0.0)
        throw std::invalid_argument("overlap_parameter: cross-basis block is all zero");
    return -std::log2(worst);
}

Eigen::MatrixXd probability_matrix(int d) {
    return probability_matrix(d, [d](const StateVector& s) {
        Eigen::VectorXd p(d);
        for (int m = 0; m < d; ++m) p[m] = std::norm(overlap(phase_state(m, d), s));
        return p;
    });
}

Eigen::MatrixXd probability_matrix(int d, const PhaseMeasurement& phase_meas) {
    check_dim(d);
    Eigen::MatrixXd out(2 * d, 2 * d);
    for (int r = 0; r < 2 * d; ++r) {
        const StateVector s =
            r < d ? time_state(r, d) : phase_state(r - d, d);
        for (int m = 0; m < d; ++m) out(r, m) = std::norm(s[m]);
        Eigen::VectorXd pf = phase_meas(s);
        const double total = pf.sum();
        if (total > 0.0) pf /= total;  // conditional on a conclusive outcome
        for (int m = 0; m < d; ++m) out(r, d + m) = pf[m];
    }
    return out;
}

void write_matrix_csv(const Eigen::MatrixXd& m, std::ostream& os) {
    char buf[64];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            os << buf;
            if (c + 1 < m.cols()) os << ',';
        }
        os << '\n';
    }
}

Eigen::MatrixXd read_matrix_csv(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::invalid_argument("read_matrix_csv: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("read_matrix_csv: empty input");
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

}  // namespace qkd
