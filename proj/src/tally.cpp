#include "qkd/tally.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace qkd {

using nlohmann::json;

double IntensitySet::tau(int i) const {
    double t = 0.0;
    for (int k = 0; k < 3; ++k) {
        double pk = std::exp(-mu[k]);
        for (int j = 1; j <= i; ++j) pk *= mu[k] / j;
        t += prob[k] * pk;
    }
    return t;
}

void IntensitySet::validate() const {
    double psum = 0.0;
    for (int k = 0; k < 3; ++k) {
        if (mu[k] < 0.0) throw std::invalid_argument("intensity mean must be >= 0");
        if (prob[k] < 0.0 || prob[k] > 1.0)
            throw std::invalid_argument("intensity probability outside [0, 1]");
        psum += prob[k];
    }
    if (std::abs(psum - 1.0) > 1e-9)
        throw std::invalid_argument("intensity probabilities must sum to 1");
    if (!(mu[kSignal] > mu[kDecoy] && mu[kDecoy] > mu[kVacuum]))
        throw std::invalid_argument("intensities must satisfy signal > decoy > vacuum");
}

double TallyTable::frames_total(int basis) const {
    return frames[basis][0] + frames[basis][1] + frames[basis][2];
}

double TallyTable::detections_total(int basis) const {
    return detections[basis][0] + detections[basis][1] + detections[basis][2];
}

double TallyTable::errors_total(int basis) const {
    return errors[basis][0] + errors[basis][1] + errors[basis][2];
}

double TallyTable::qber(int basis) const {
    const double n = detections_total(basis);
    return n > 0.0 ? errors_total(basis) / n : 0.0;
}

void TallyTable::validate() const {
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            if (errors[b][k] < 0 || detections[b][k] < 0 || frames[b][k] < 0)
                throw std::invalid_argument("tally counts must be non-negative");
            if (errors[b][k] > detections[b][k] + 1e-9 ||
                detections[b][k] > frames[b][k] + 1e-9)
                throw std::invalid_argument("tally requires m <= n <= frames");
        }
}

TallyTable TallyTable::scaled(double factor) const {
    TallyTable out = *this;
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            out.frames[b][k] *= factor;
            out.detections[b][k] *= factor;
            out.errors[b][k] *= factor;
        }
    if (out.truth) {
        for (int b = 0; b < 2; ++b) {
            for (int i = 0; i < 3; ++i) out.truth->detections_by_photons[b][i] *= factor;
            out.truth->single_photon_errors[b] *= factor;
        }
    }
    return out;
}

namespace {
constexpr const char* kBasisTag[2] = {"T", "P"};
constexpr const char* kIntensityTag[3] = {"s", "d", "v"};
}  // namespace

std::string tally_to_json(const TallyTable& t) {
    json j;
    j["schema"] = 1;
    for (int k = 0; k < 3; ++k)
        j[std::string("frames_") + kIntensityTag[k]] = t.frames[0][k] + t.frames[1][k];
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            const std::string cell = std::string(kBasisTag[b]) + kIntensityTag[k];
            j["n_" + cell] = t.detections[b][k];
            j["m_" + cell] = t.errors[b][k];
        }
    return j.dump(2);
}

TallyTable tally_from_json(const std::string& text, double time_basis_prob) {
    if (time_basis_prob <= 0.0 || time_basis_prob >= 1.0)
        throw std::invalid_argument("tally_from_json: basis probability outside (0, 1)");
    json j = json::parse(text);
    TallyTable t;
    for (int k = 0; k < 3; ++k) {
        const double total = j.at(std::string("frames_") + kIntensityTag[k]).get<double>();
        t.frames[kTime][k] = total * time_basis_prob;
        t.frames[kPhase][k] = total * (1.0 - time_basis_prob);
    }
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) {
            const std::string cell = std::string(kBasisTag[b]) + kIntensityTag[k];
            t.detections[b][k] = j.at("n_" + cell).get<double>();
            t.errors[b][k] = j.at("m_" + cell).get<double>();
        }
    t.validate();
    return t;
}

}  // namespace qkd
