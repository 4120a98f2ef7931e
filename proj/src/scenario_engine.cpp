#include "ems/scenario_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ems {

Vector ScenarioSet::weights() const {
    Vector w(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) w[i] = scenarios[i].probability;
    if (normalized && w.size() > 0) {
        Scalar total = w.sum();
        if (total <= 0) throw ValidationError("retained scenario mass is zero");
        w /= total;
    }
    return w;
}

ScenarioSet enumerate_scenarios(const std::vector<Scalar>& pofs, Scalar threshold,
                                bool renormalize) {
    const int n = static_cast<int>(pofs.size());
    if (n > 25)
        throw ValidationError("scenario enumeration guard: " + std::to_string(n) +
                              " components exceed the 2^25 cap; raise the threshold or "
                              "reduce the failable set");
    for (Scalar p : pofs)
        if (!(p >= 0 && p < 1)) throw ValidationError("pof outside [0,1)");
    if (!(threshold >= 0 && threshold <= 1))
        throw ValidationError("threshold must be in [0,1]");

    ScenarioSet set;
    set.threshold = threshold;
    set.normalized = renormalize;
    set.dropped_mass = 0;

    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        Scalar p = 1;
        for (int i = 0; i < n; ++i) p *= (mask >> i) & 1 ? pofs[i] : 1 - pofs[i];
        if (p >= threshold) {
            Scenario s;
            s.mask.resize(n);
            for (int i = 0; i < n; ++i) s.mask[i] = (mask >> i) & 1;
            s.probability = p;
            set.scenarios.push_back(std::move(s));
        } else {
            set.dropped_mass += p;
        }
    }
    return set;
}

namespace {
void check_distribution(const Vector& losses, const Vector& probs, Scalar alpha) {
    if (losses.size() == 0) throw ValidationError("empty loss distribution");
    if (losses.size() != probs.size())
        throw ValidationError("losses and probabilities differ in length");
    if (std::abs(probs.sum() - 1.0) > 1e-9)
        throw ValidationError("probabilities must sum to 1 within 1e-9");
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must be in (0,1)");
}

std::vector<int> order_by_loss(const Vector& losses) {
    std::vector<int> idx(losses.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return losses[a] < losses[b]; });
    return idx;
}
}  // namespace

Scalar var_alpha(const Vector& losses, const Vector& probs, Scalar alpha) {
    check_distribution(losses, probs, alpha);
    auto idx = order_by_loss(losses);
    Scalar cum = 0;
    for (int i : idx) {
        cum += probs[i];
        if (cum >= alpha - 1e-12) return losses[i];  // slack absorbs summation dust
    }
    return losses[idx.back()];
}

Scalar cvar_alpha(const Vector& losses, const Vector& probs, Scalar alpha) {
    check_distribution(losses, probs, alpha);
    // average exactly (1 - alpha) mass off the top, splitting the atom at the
    // boundary so the result is continuous in alpha
    auto idx = order_by_loss(losses);
    Scalar remaining = 1 - alpha;
    Scalar acc = 0;
    for (auto it = idx.rbegin(); it != idx.rend() && remaining > 1e-15; ++it) {
        Scalar take = std::min(remaining, probs[*it]);
        acc += take * losses[*it];
        remaining -= take;
    }
    return acc / (1 - alpha);
}

RiskReport risk_report(const ScenarioSet& set,
                       const std::function<Scalar(const Scenario&, int)>& served_weighted,
                       Scalar alpha) {
    if (set.scenarios.empty()) throw ValidationError("empty scenario set");
    RiskReport report;
    report.alpha = alpha;

    Vector w = set.weights();
    Vector served(set.size());
    for (int i = 0; i < set.size(); ++i) served[i] = served_weighted(set.scenarios[i], i);

    report.expected_weighted = w.dot(served);
    Vector losses = Vector::Constant(set.size(), report.expected_weighted) - served;
    report.var = var_alpha(losses, w, alpha);
    report.cvar = cvar_alpha(losses, w, alpha);
    report.per_scenario_loss.reserve(set.size());
    for (int i = 0; i < set.size(); ++i)
        report.per_scenario_loss.push_back({i, losses[i], set.scenarios[i].probability});
    return report;
}

}  // namespace ems
