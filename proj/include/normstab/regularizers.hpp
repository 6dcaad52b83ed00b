#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "normstab/cells.hpp"
#include "normstab/tensor.hpp"

namespace normstab {

enum class PenaltyVariant {
    None,
    NormStabilizer,     // (beta/T) sum (|h_t| - |h_{t-1}|)^2
    StateDiffSq,        // (beta/T) sum |h_t - h_{t-1}|^2
    RelativeNormDiffSq, // (beta/T) sum ((|h_t| - |h_{t-1}|) / |h_t|)^2
    L1NormDiffSq,       // (beta/T) sum (|h_t|_1 - |h_{t-1}|_1)^2
    FixedTargetSq,      // (beta/T) sum (|h_t| - target)^2
    EndpointDiffSq,     // beta (|h_0| - |h_T|)^2
    NormDiffAbs,        // (beta/T) sum | |h_t| - |h_{t-1}| |
    NormSq,             // (beta/T) sum |h_t|^2
};

enum class PenaltyTarget { Hidden, MemoryCell };

// Division guard: the gradient of the L2 norm is undefined at 0 and h_0 is
// typically the zero vector.
inline constexpr double kNormEps = 1e-8;

struct RegularizerSpec {
    PenaltyVariant variant = PenaltyVariant::None;
    double beta = 0.0;
    PenaltyTarget target = PenaltyTarget::Hidden;
    double fixed_target = 5.0;
    double weight_noise_sigma = 0.0;
    double dropout_p = 0.0;
    bool skip_first_term = false; // exclude the t=1 term that pairs with h_0

    void validate() const {
        if (beta < 0.0) throw ParameterError("beta must be >= 0");
        if (weight_noise_sigma < 0.0)
            throw ParameterError("weight_noise_sigma must be >= 0");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ParameterError("dropout_p must be in [0, 1)");
    }
};

inline PenaltyVariant parse_variant(const std::string& s) {
    if (s == "none") return PenaltyVariant::None;
    if (s == "norm_stabilizer") return PenaltyVariant::NormStabilizer;
    if (s == "state_diff_sq") return PenaltyVariant::StateDiffSq;
    if (s == "relative_norm_diff_sq") return PenaltyVariant::RelativeNormDiffSq;
    if (s == "l1_norm_diff_sq") return PenaltyVariant::L1NormDiffSq;
    if (s == "fixed_target_sq") return PenaltyVariant::FixedTargetSq;
    if (s == "endpoint_diff_sq") return PenaltyVariant::EndpointDiffSq;
    if (s == "norm_diff_abs") return PenaltyVariant::NormDiffAbs;
    if (s == "norm_sq") return PenaltyVariant::NormSq;
    throw ParameterError("unknown penalty variant: " + s);
}

inline const char* variant_name(PenaltyVariant v) {
    switch (v) {
        case PenaltyVariant::None: return "none";
        case PenaltyVariant::NormStabilizer: return "norm_stabilizer";
        case PenaltyVariant::StateDiffSq: return "state_diff_sq";
        case PenaltyVariant::RelativeNormDiffSq: return "relative_norm_diff_sq";
        case PenaltyVariant::L1NormDiffSq: return "l1_norm_diff_sq";
        case PenaltyVariant::FixedTargetSq: return "fixed_target_sq";
        case PenaltyVariant::EndpointDiffSq: return "endpoint_diff_sq";
        case PenaltyVariant::NormDiffAbs: return "norm_diff_abs";
        case PenaltyVariant::NormSq: return "norm_sq";
    }
    return "?";
}

namespace detail {

inline const double* state(const Trajectory& tr, PenaltyTarget tgt,
                           std::size_t t) {
    if (tgt == PenaltyTarget::MemoryCell) {
        if (!tr.lstm)
            throw ParameterError("memory_cell penalty target requires an LSTM");
        return tr.c(t);
    }
    return tr.h(t);
}

inline double guarded(double norm) { return std::max(norm, kNormEps); }

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace detail

inline double penalty_value(const RegularizerSpec& spec, const Trajectory& tr) {
    spec.validate();
    const std::size_t T = tr.steps, n = tr.n;
    if (T < 1) throw ParameterError("penalty needs trajectory length T >= 1");
    if (spec.variant == PenaltyVariant::None || spec.beta == 0.0) return 0.0;

    auto st = [&](std::size_t t) { return detail::state(tr, spec.target, t); };
    auto norm2 = [&](std::size_t t) { return l2_norm(st(t), n); };

    const std::size_t t_begin = spec.skip_first_term ? 2 : 1;
    double acc = 0.0;
    switch (spec.variant) {
        case PenaltyVariant::NormStabilizer:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double d = norm2(t) - norm2(t - 1);
                acc += d * d;
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::StateDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double *a = st(t), *b = st(t - 1);
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = a[j] - b[j];
                    acc += d * d;
                }
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::RelativeNormDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double nt = detail::guarded(norm2(t));
                const double r = (nt - norm2(t - 1)) / nt;
                acc += r * r;
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::L1NormDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double d = l1_norm(st(t), n) - l1_norm(st(t - 1), n);
                acc += d * d;
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::FixedTargetSq:
            for (std::size_t t = 1; t <= T; ++t) {
                const double d = norm2(t) - spec.fixed_target;
                acc += d * d;
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::EndpointDiffSq: {
            const double d = norm2(0) - norm2(T);
            return spec.beta * d * d;
        }
        case PenaltyVariant::NormDiffAbs:
            for (std::size_t t = t_begin; t <= T; ++t)
                acc += std::fabs(norm2(t) - norm2(t - 1));
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::NormSq:
            for (std::size_t t = 1; t <= T; ++t) {
                const double nt = norm2(t);
                acc += nt * nt;
            }
            return spec.beta / static_cast<double>(T) * acc;
        case PenaltyVariant::None: break;
    }
    return 0.0;
}

// Exact gradient of penalty_value w.r.t. the targeted states, one slot per
// time-step t = 0..T, flat (T+1) x n. Slots the penalty does not touch stay
// zero.
inline std::vector<double> penalty_backward(const RegularizerSpec& spec,
                                            const Trajectory& tr) {
    spec.validate();
    const std::size_t T = tr.steps, n = tr.n;
    if (T < 1) throw ParameterError("penalty needs trajectory length T >= 1");
    std::vector<double> grad((T + 1) * n, 0.0);
    if (spec.variant == PenaltyVariant::None || spec.beta == 0.0) return grad;

    auto st = [&](std::size_t t) { return detail::state(tr, spec.target, t); };
    std::vector<double> nrm(T + 1);
    for (std::size_t t = 0; t <= T; ++t) nrm[t] = l2_norm(st(t), n);

    const double scale = spec.beta / static_cast<double>(T);
    const std::size_t t_begin = spec.skip_first_term ? 2 : 1;
    // d|h_t|/dh_t = h_t / max(|h_t|, eps)
    auto add_norm_dir = [&](std::size_t t, double coeff) {
        const double* s = st(t);
        const double inv = 1.0 / detail::guarded(nrm[t]);
        double* g = grad.data() + t * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += coeff * inv * s[j];
    };

    switch (spec.variant) {
        case PenaltyVariant::NormStabilizer:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double d = nrm[t] - nrm[t - 1];
                add_norm_dir(t, 2.0 * scale * d);
                add_norm_dir(t - 1, -2.0 * scale * d);
            }
            break;
        case PenaltyVariant::StateDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double *a = st(t), *b = st(t - 1);
                double* gt = grad.data() + t * n;
                double* gp = grad.data() + (t - 1) * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = 2.0 * scale * (a[j] - b[j]);
                    gt[j] += d;
                    gp[j] -= d;
                }
            }
            break;
        case PenaltyVariant::RelativeNormDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double nt = detail::guarded(nrm[t]);
                const double r = (nt - nrm[t - 1]) / nt;
                // dr/dn_t = n_{t-1} / n_t^2, dr/dn_{t-1} = -1 / n_t
                add_norm_dir(t, 2.0 * scale * r * nrm[t - 1] / (nt * nt));
                add_norm_dir(t - 1, -2.0 * scale * r / nt);
            }
            break;
        case PenaltyVariant::L1NormDiffSq:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double d =
                    l1_norm(st(t), n) - l1_norm(st(t - 1), n);
                for (std::size_t k : {t, t - 1}) {
                    const double coeff =
                        (k == t ? 2.0 : -2.0) * scale * d;
                    const double* s = st(k);
                    double* g = grad.data() + k * n;
                    for (std::size_t j = 0; j < n; ++j)
                        g[j] += coeff * detail::sgn(s[j]);
                }
            }
            break;
        case PenaltyVariant::FixedTargetSq:
            for (std::size_t t = 1; t <= T; ++t)
                add_norm_dir(t, 2.0 * scale * (nrm[t] - spec.fixed_target));
            break;
        case PenaltyVariant::EndpointDiffSq: {
            const double d = nrm[0] - nrm[T];
            add_norm_dir(0, 2.0 * spec.beta * d);
            add_norm_dir(T, -2.0 * spec.beta * d);
            break;
        }
        case PenaltyVariant::NormDiffAbs:
            for (std::size_t t = t_begin; t <= T; ++t) {
                const double s = detail::sgn(nrm[t] - nrm[t - 1]);
                add_norm_dir(t, scale * s);
                add_norm_dir(t - 1, -scale * s);
            }
            break;
        case PenaltyVariant::NormSq:
            for (std::size_t t = 1; t <= T; ++t) {
                const double* s = st(t);
                double* g = grad.data() + t * n;
                for (std::size_t j = 0; j < n; ++j)
                    g[j] += 2.0 * scale * s[j];
            }
            break;
        case PenaltyVariant::None: break;
    }
    return grad;
}

// Saves the clean weight matrices, perturbs them in place, and restores on
// release. Biases are untouched; the update step applies gradients to the
// restored clean weights.
template <class Params>
class WeightNoiseHandle {
public:
    WeightNoiseHandle(Params& params, double sigma, Rng& rng) : params_(params) {
        if (sigma < 0.0) throw ParameterError("sigma must be >= 0");
        if (sigma == 0.0) return;
        params_.for_each_param([&](const std::string& name, Tensor& t) {
            if (t.rank() < 2) return; // weight matrices only
            saved_.emplace_back(&t, t);
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] += rng.gaussian(0.0, sigma);
        });
    }
    ~WeightNoiseHandle() { restore(); }
    void restore() {
        for (auto& [ptr, clean] : saved_) *ptr = clean;
        saved_.clear();
    }
    WeightNoiseHandle(const WeightNoiseHandle&) = delete;
    WeightNoiseHandle& operator=(const WeightNoiseHandle&) = delete;

private:
    Params& params_;
    std::vector<std::pair<Tensor*, Tensor>> saved_;
};

// Inverted dropout: entries are 0 with probability p, else 1/(1-p), so the
// mask is the identity in expectation and evaluation needs no rescaling.
inline Tensor dropout_mask(Rng& rng, std::vector<std::size_t> shape, double p) {
    if (p < 0.0 || p >= 1.0) throw ParameterError("dropout p must be in [0, 1)");
    Tensor m(std::move(shape));
    const double keep = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = rng.next_double() < p ? 0.0 : keep;
    return m;
}

} // namespace normstab
