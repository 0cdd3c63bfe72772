#include "qkd/channel.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace qkd {

double transmittance(double loss_db) {
    if (loss_db < 0.0) throw std::invalid_argument("transmittance: negative loss");
    return std::pow(10.0, -loss_db / 10.0);
}

double ChannelModel::transmittance() const { return qkd::transmittance(loss_db); }

double ReceiverLayout::phase_arm_transmittance() const {
    return qkd::transmittance(phase_insertion_loss_db);
}

double efficiency_at_rate(const DetectorModel& det, double incident_rate) {
    if (incident_rate < 0.0) throw std::invalid_argument("efficiency_at_rate: negative rate");
    return det.eta0 / (1.0 + det.eta0 * incident_rate * det.dead_time);
}

double saturated_rate(double load, const DetectorModel& det) {
    if (load < 0.0) throw std::invalid_argument("saturated_rate: negative load");
    const double total = load + det.dark_rate;
    if (total <= 0.0) return 0.0;
    const double tau = det.dead_time;
    // r = total * (1 - r*tau); damping 1/(1 + total*tau) keeps the map
    // contractive for any load.
    const double alpha = 1.0 / (1.0 + total * tau);
    double r = total * alpha;
    for (int it = 0; it < 10000; ++it) {
        const double next = (1.0 - alpha) * r + alpha * total * std::max(0.0, 1.0 - r * tau);
        if (std::abs(next - r) <= 1e-10 * std::max(next, 1.0)) return next;
        r = next;
    }
    throw std::runtime_error("saturated_rate: fixed point did not converge");
}

double steady_state_detection_rate(const ReceiverLayout& layout,
                                   const DetectorModel& det,
                                   double frame_rate, double mean_click_prob) {
    if (frame_rate < 0.0 || mean_click_prob < 0.0)
        throw std::invalid_argument("steady_state_detection_rate: negative input");
    const double load = frame_rate * mean_click_prob / layout.time_arm_fanout;
    return saturated_rate(load, det);
}

double saturation_factor(double load, const DetectorModel& det) {
    const double r = saturated_rate(load, det);
    return std::max(0.0, 1.0 - r * det.dead_time);
}

double expected_gain(double mu, double eta, double y0) {
    if (mu < 0.0 || eta < 0.0 || eta > 1.0 || y0 < 0.0 || y0 > 1.0)
        throw std::invalid_argument("expected_gain: parameter out of range");
    // 1 - (1 - y0) e^{-eta mu}, arranged to stay exact as mu -> 0
    return y0 + (1.0 - y0) * (-std::expm1(-eta * mu));
}

double expected_error_rate(double mu, double eta, double y0,
                           double e_intrinsic, double e0) {
    if (e_intrinsic < 0.0 || e_intrinsic > 1.0 || e0 < 0.0 || e0 > 1.0)
        throw std::invalid_argument("expected_error_rate: rate out of range");
    const double q = expected_gain(mu, eta, y0);
    if (q <= 0.0) return e0;
    const double weighted = e0 * y0 + e_intrinsic * (-std::expm1(-eta * mu));
    return weighted / q;
}

double jitter_misbin_probability(double jitter_sigma, double bin_width) {
    if (jitter_sigma < 0.0 || bin_width <= 0.0)
        throw std::invalid_argument("jitter_misbin_probability: bad parameters");
    if (jitter_sigma == 0.0) return 0.0;
    return std::erfc(bin_width / (2.0 * std::sqrt(2.0) * jitter_sigma));
}

void write_efficiency_curve_csv(const DetectorModel& det, std::ostream& os,
                                double max_rate, int points) {
    os << "incident_rate,efficiency,detected_rate\n";
    char buf[128];
    for (int i = 0; i < points; ++i) {
        const double rate = max_rate * std::pow(10.0, -6.0 * (1.0 - double(i) / (points - 1)));
        const double eff = efficiency_at_rate(det, rate);
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", rate, eff, rate * eff);
        os << buf;
    }
}

}  // namespace qkd
