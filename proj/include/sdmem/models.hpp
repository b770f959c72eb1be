#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sdmem/model.hpp"

namespace sdmem {

/// A registered model: its spec, reference parameters and how subjects are laid out.
struct ModelEntry {
    ModelSpec spec;
    Theta theta_true;
    std::vector<std::string> parameter_names;  // one per fixed effect
    std::vector<std::string> effect_names;     // one per random effect
    std::function<SubjectConfig(std::size_t index)> subject;
    std::vector<int> beta_selector;  // treatment block, empty when the model has none
    std::string description;
    // Optional reporting on another scale, e.g. (eps, s) for the neuron model.
    std::function<std::vector<std::pair<std::string, double>>(const Vector& mu)> derived;
};

/// Five-compartment cascade with rates alpha (6) and treatment effects beta (5):
///   dX = [-G(alpha + phi) X + D beta] dt + dW,  phi ~ N(0, Omega) on alpha only.
ModelEntry transfer5();

/// Stochastic FitzHugh-Nagumo model with mu = (1/eps, s/eps, gamma, eta):
///   dY = (Y - Y^3 - Z + s)/eps dt + sigma1 dW1,  dZ = (gamma Y - Z + eta) dt + sigma2 dW2.
ModelEntry fhn();

/// Scalar Ornstein-Uhlenbeck model dX = -(mu + phi) X dt + dW.
ModelEntry ou();

// Rate matrix G(alpha) of the cascade (5 x 5).
Matrix rate_matrix(const Vector& alpha);

// Solves G(alpha) m = beta.
Vector stationary_mean(const Vector& alpha, const Vector& beta);

// Drift of the neuron model in its original parameters.
Vector fhn_drift_original(VecIn x, double eps, double s, double gamma, double eta);

namespace registry {
void register_model(ModelEntry entry);
std::vector<std::string> names();
const ModelEntry& get(const std::string& name);
}  // namespace registry

}  // namespace sdmem
