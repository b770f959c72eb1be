#include "sdmem/models.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace sdmem {

Matrix rate_matrix(const Vector& alpha) {
    if (alpha.size() != 6) throw Error(ErrorKind::DimensionMismatch, "rate matrix needs six rates");
    Matrix g = Matrix::Zero(5, 5);
    g(0, 0) = alpha[0];
    g(0, 4) = -alpha[4];
    g(1, 0) = -alpha[0];
    g(1, 1) = alpha[1];
    g(2, 1) = -alpha[1];
    g(2, 2) = alpha[2] + alpha[5];
    g(3, 2) = -alpha[2];
    g(3, 3) = alpha[3];
    g(4, 3) = -alpha[3];
    g(4, 4) = alpha[4];
    return g;
}

Vector stationary_mean(const Vector& alpha, const Vector& beta) {
    return rate_matrix(alpha).partialPivLu().solve(beta);
}

Vector fhn_drift_original(VecIn x, double eps, double s, double gamma, double eta) {
    const double y = x[0];
    const double z = x[1];
    Vector out(2);
    out[0] = (y - y * y * y - z + s) / eps;
    out[1] = gamma * y - z + eta;
    return out;
}

ModelEntry transfer5() {
    ModelEntry e;
    ModelSpec& m = e.spec;
    m.name = "transfer5";
    m.state_dim = 5;
    m.fixed_dim = 11;
    m.effect_dim = 6;
    m.covariate_dim = 1;
    // Column j < 6 is -(dG/dalpha_j) x; column 6 + k is D e_k.
    m.drift_design = [](double, VecIn x, VecIn cov, MatOut b) {
        b.setZero();
        b(0, 0) = -x[0];
        b(1, 0) = x[0];
        b(1, 1) = -x[1];
        b(2, 1) = x[1];
        b(2, 2) = -x[2];
        b(3, 2) = x[2];
        b(3, 3) = -x[3];
        b(4, 3) = x[3];
        b(0, 4) = x[4];
        b(4, 4) = -x[4];
        b(2, 5) = -x[2];
        const double treated = cov[0];
        for (int k = 0; k < 5; ++k) b(k, 6 + k) = treated;
    };
    m.effect_columns = {0, 1, 2, 3, 4, 5};
    m.diffusion = [](double, VecIn, MatOut s) { s.setIdentity(); };
    m.constant_diffusion = true;

    e.theta_true.mu.resize(11);
    e.theta_true.mu << 2, 4, 3, 2, 1, 1, 1, 2, 3, 1, -2;
    Vector var(6);
    var << 0.25, 1.0, 1.0, 0.25, 0.09, 0.09;
    e.theta_true.omega = var.asDiagonal();
    e.parameter_names = {"alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6",
                         "beta1",  "beta2",  "beta3",  "beta4",  "beta5"};
    e.effect_names = {"alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6"};
    e.beta_selector = {6, 7, 8, 9, 10};
    e.subject = [](std::size_t i) {
        SubjectConfig c;
        c.id = std::to_string(i);
        c.x0 = Vector::Zero(5);
        c.horizon = 15.0;
        c.covariates = constant_covariates(Vector::Constant(1, static_cast<double>(i % 2)));
        return c;
    };
    e.description = "5-compartment linear transfer model, binary treatment covariate (odd subjects treated)";
    return e;
}

ModelEntry fhn() {
    constexpr double sigma1 = 0.5;
    constexpr double sigma2 = 0.3;
    ModelEntry e;
    ModelSpec& m = e.spec;
    m.name = "fhn";
    m.state_dim = 2;
    m.fixed_dim = 4;
    m.effect_dim = 4;
    m.drift_offset = [](double, VecIn x, VecIn, VecOut a) {
        a[0] = 0.0;
        a[1] = -x[1];
    };
    m.drift_design = [](double, VecIn x, VecIn, MatOut b) {
        const double y = x[0];
        const double z = x[1];
        b(0, 0) = y - y * y * y - z;
        b(0, 1) = 1.0;
        b(0, 2) = 0.0;
        b(0, 3) = 0.0;
        b(1, 0) = 0.0;
        b(1, 1) = 0.0;
        b(1, 2) = y;
        b(1, 3) = 1.0;
    };
    m.diffusion = [](double, VecIn, MatOut s) {
        s.setZero();
        s(0, 0) = sigma1;
        s(1, 1) = sigma2;
    };
    m.constant_diffusion = true;

    // B' Gamma^{-1} rows: ((y - y^3 - z)/s1^2, 0), (1/s1^2, 0), (0, y/s2^2), (0, 1/s2^2).
    // Gradient parts: (y^2/2 - y^4/4)/s1^2, y/s1^2, none, z/s2^2.
    constexpr double w1 = 1.0 / (sigma1 * sigma1);
    constexpr double w2 = 1.0 / (sigma2 * sigma2);
    ItoAntiderivative ito;
    ito.potential = [](double, VecIn x, VecIn, VecOut h) {
        const double y = x[0];
        h[0] = (0.5 * y * y - 0.25 * y * y * y * y) * w1;
        h[1] = y * w1;
        h[2] = 0.0;
        h[3] = x[1] * w2;
    };
    ito.hessian = [](double, VecIn x, VecIn, std::vector<Matrix>& hess) {
        for (auto& block : hess) block.setZero();
        hess[0](0, 0) = (1.0 - 3.0 * x[0] * x[0]) * w1;
    };
    ito.remainder = [](double, VecIn x, VecIn, MatOut rem) {
        rem.setZero();
        rem(0, 0) = -x[1] * w1;
        rem(2, 1) = x[0] * w2;
    };
    m.ito = std::move(ito);

    e.theta_true.mu.resize(4);
    e.theta_true.mu << 10.0, 5.0, 1.5, 1.2;
    Vector var(4);
    var << 2.25, 1.0, 0.04, 0.04;
    e.theta_true.omega = var.asDiagonal();
    e.parameter_names = {"inv_eps", "s_over_eps", "gamma", "eta"};
    e.effect_names = e.parameter_names;
    e.subject = [](std::size_t i) {
        SubjectConfig c;
        c.id = std::to_string(i);
        c.x0 = Vector::Zero(2);
        c.horizon = 20.0;
        return c;
    };
    e.derived = [](const Vector& mu) {
        return std::vector<std::pair<std::string, double>>{{"eps", 1.0 / mu[0]}, {"s", mu[1] / mu[0]}};
    };
    e.description = "stochastic FitzHugh-Nagumo model, mu = (1/eps, s/eps, gamma, eta), sigma = (0.5, 0.3)";
    return e;
}

ModelEntry ou() {
    ModelEntry e;
    ModelSpec& m = e.spec;
    m.name = "ou";
    m.state_dim = 1;
    m.fixed_dim = 1;
    m.effect_dim = 1;
    m.drift_design = [](double, VecIn x, VecIn, MatOut b) { b(0, 0) = -x[0]; };
    m.diffusion = [](double, VecIn, MatOut s) { s(0, 0) = 1.0; };
    m.constant_diffusion = true;
    ItoAntiderivative ito;
    ito.potential = [](double, VecIn x, VecIn, VecOut h) { h[0] = -0.5 * x[0] * x[0]; };
    ito.hessian = [](double, VecIn, VecIn, std::vector<Matrix>& hess) { hess[0](0, 0) = -1.0; };
    m.ito = std::move(ito);

    e.theta_true.mu = Vector::Constant(1, 2.0);
    e.theta_true.omega = Matrix::Constant(1, 1, 0.25);
    e.parameter_names = {"rate"};
    e.effect_names = {"rate"};
    e.subject = [](std::size_t i) {
        SubjectConfig c;
        c.id = std::to_string(i);
        c.x0 = Vector::Constant(1, 1.0);
        c.horizon = 20.0;
        return c;
    };
    e.description = "scalar Ornstein-Uhlenbeck model with a random mean-reversion rate";
    return e;
}

namespace registry {

namespace {

struct Store {
    std::mutex lock;
    std::map<std::string, std::shared_ptr<const ModelEntry>> entries;
    std::vector<std::shared_ptr<const ModelEntry>> replaced;  // keeps references from get() valid

    Store() {
        for (auto make : {&transfer5, &fhn, &ou}) {
            auto entry = std::make_shared<const ModelEntry>(make());
            entries[entry->spec.name] = entry;
        }
    }
};

Store& store() {
    static Store s;
    return s;
}

}  // namespace

void register_model(ModelEntry entry) {
    entry.spec.validate();
    validate_theta(entry.theta_true, entry.spec.fixed_dim, entry.spec.effect_dim);
    if (!entry.subject) throw Error(ErrorKind::InvalidArgument, "model entry needs a subject builder");
    Store& s = store();
    std::lock_guard<std::mutex> guard(s.lock);
    const std::string name = entry.spec.name;
    if (auto it = s.entries.find(name); it != s.entries.end()) s.replaced.push_back(it->second);
    s.entries[name] = std::make_shared<const ModelEntry>(std::move(entry));
}

std::vector<std::string> names() {
    Store& s = store();
    std::lock_guard<std::mutex> guard(s.lock);
    std::vector<std::string> out;
    for (const auto& [name, entry] : s.entries) out.push_back(name);
    return out;
}

const ModelEntry& get(const std::string& name) {
    Store& s = store();
    std::lock_guard<std::mutex> guard(s.lock);
    auto it = s.entries.find(name);
    if (it == s.entries.end()) throw Error(ErrorKind::InvalidArgument, "unknown model '" + name + "'");
    return *it->second;
}

}  // namespace registry

}  // namespace sdmem
