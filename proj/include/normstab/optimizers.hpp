#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "normstab/tensor.hpp"

namespace normstab {

enum class OptimizerKind { SgdMomentum, Adam };

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd_momentum") return OptimizerKind::SgdMomentum;
    if (s == "adam") return OptimizerKind::Adam;
    throw ParameterError("unknown optimizer: " + s);
}

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    double learning_rate = 0.002;
    double momentum = 0.99;
    double clip_threshold = 1.0;
    int max_epochs = 100;
    int patience = 25;
    std::uint64_t seed = 1;
    // Adam defaults per the usual formulation.
    double adam_b1 = 0.9;
    double adam_b2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (learning_rate <= 0.0) throw ParameterError("learning_rate must be > 0");
        if (clip_threshold <= 0.0) throw ParameterError("clip_threshold must be > 0");
        if (patience < 0) throw ParameterError("patience must be >= 0");
        if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
    }
};

struct ClipResult {
    double global_norm = 0.0;
    bool rescaled = false;
    bool nan_event = false;
};

// Global-norm clipping over the joint gradient vector. A non-finite norm
// zeroes all gradients and reports a NaN event instead of throwing.
inline ClipResult clip_gradients(std::vector<Tensor*> grads, double threshold) {
    if (threshold <= 0.0) throw ParameterError("clip threshold must be > 0");
    double sq = 0.0;
    for (Tensor* g : grads)
        for (std::size_t i = 0; i < g->size(); ++i) sq += (*g)[i] * (*g)[i];
    ClipResult r;
    r.global_norm = std::sqrt(sq);
    if (!std::isfinite(r.global_norm)) {
        for (Tensor* g : grads) g->fill(0.0);
        r.nan_event = true;
        return r;
    }
    if (r.global_norm > threshold) {
        const double s = threshold / r.global_norm;
        for (Tensor* g : grads)
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] *= s;
        r.rescaled = true;
    }
    return r;
}

// Classical momentum: v <- mu v - lr g; theta <- theta + v.
inline void sgd_momentum_step(std::vector<Tensor*> params,
                              const std::vector<const Tensor*>& grads,
                              std::vector<Tensor*> velocity, double lr,
                              double mu) {
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& th = *params[p];
        const Tensor& g = *grads[p];
        Tensor& v = *velocity[p];
        if (!th.same_shape(g) || !th.same_shape(v))
            throw DimensionError("sgd step shape mismatch");
        for (std::size_t i = 0; i < th.size(); ++i) {
            v[i] = mu * v[i] - lr * g[i];
            th[i] += v[i];
        }
    }
}

// Standard Adam with bias correction; t is the 1-based step count.
inline void adam_step(std::vector<Tensor*> params,
                      const std::vector<const Tensor*>& grads,
                      std::vector<Tensor*> m, std::vector<Tensor*> v, double lr,
                      double b1, double b2, double eps, std::int64_t t) {
    if (t < 1) throw ParameterError("adam step count must be >= 1");
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& th = *params[p];
        const Tensor& g = *grads[p];
        Tensor& mm = *m[p];
        Tensor& vv = *v[p];
        if (!th.same_shape(g) || !th.same_shape(mm) || !th.same_shape(vv))
            throw DimensionError("adam step shape mismatch");
        for (std::size_t i = 0; i < th.size(); ++i) {
            mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
            vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
            const double mh = mm[i] / c1;
            const double vh = vv[i] / c2;
            th[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

// Optimizer state bound to a fixed parameter list. Slots are checkpointed
// and restored together with the parameters on NaN rollback.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(const TrainConfig& cfg, const std::vector<Tensor*>& params)
        : cfg_(cfg) {
        for (Tensor* p : params) {
            slot1_.emplace_back(p->shape());
            slot2_.emplace_back(p->shape());
        }
    }

    void step(std::vector<Tensor*> params,
              const std::vector<const Tensor*>& grads, double lr) {
        std::vector<Tensor*> s1, s2;
        for (auto& t : slot1_) s1.push_back(&t);
        for (auto& t : slot2_) s2.push_back(&t);
        if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
            sgd_momentum_step(params, grads, s1, lr, cfg_.momentum);
        } else {
            adam_step(params, grads, s1, s2, lr, cfg_.adam_b1, cfg_.adam_b2,
                      cfg_.adam_eps, ++t_);
        }
    }

    const std::vector<Tensor>& slot1() const { return slot1_; }
    const std::vector<Tensor>& slot2() const { return slot2_; }
    std::vector<Tensor>& slot1() { return slot1_; }
    std::vector<Tensor>& slot2() { return slot2_; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }

private:
    TrainConfig cfg_;
    std::vector<Tensor> slot1_, slot2_;
    std::int64_t t_ = 0;
};

// Epoch-boundary snapshot used by the rollback protocol.
struct TrainerSnapshot {
    std::vector<Tensor> params;
    std::vector<Tensor> opt_slot1, opt_slot2;
    std::int64_t opt_step_count = 0;
    int epoch = 0;
    std::uint64_t rng_counter = 0;
};

struct TrainerState {
    double learning_rate = 0.0;
    int epoch = 0;
    int rollback_count = 0;
    TrainerSnapshot initial;    // epoch-0 fallback
    TrainerSnapshot prev_epoch; // most recent epoch boundary
    bool has_prev_epoch = false;
};

inline TrainerSnapshot take_snapshot(const std::vector<Tensor*>& params,
                                     const Optimizer& opt, int epoch,
                                     std::uint64_t rng_counter) {
    TrainerSnapshot s;
    for (const Tensor* p : params) s.params.push_back(*p);
    s.opt_slot1 = opt.slot1();
    s.opt_slot2 = opt.slot2();
    s.opt_step_count = opt.step_count();
    s.epoch = epoch;
    s.rng_counter = rng_counter;
    return s;
}

inline void restore_snapshot(const TrainerSnapshot& s,
                             std::vector<Tensor*> params, Optimizer& opt) {
    if (s.params.size() != params.size())
        throw StructuralError("snapshot does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = s.params[i];
    opt.slot1() = s.opt_slot1;
    opt.slot2() = s.opt_slot2;
    opt.set_step_count(s.opt_step_count);
}

// NaN in the cost: halve the learning rate and restart from the previous
// epoch's parameters (initial parameters when the first epoch has no
// checkpoint yet). Optimizer slots are restored alongside.
inline void nan_rollback(TrainerState& st, std::vector<Tensor*> params,
                         Optimizer& opt) {
    st.learning_rate /= 2.0;
    st.rollback_count += 1;
    const TrainerSnapshot& snap =
        st.has_prev_epoch ? st.prev_epoch : st.initial;
    restore_snapshot(snap, params, opt);
    st.epoch = snap.epoch;
}

// True iff the best (lowest) dev metric is more than `patience` epochs old.
inline bool early_stop(const std::vector<double>& dev_history, int patience) {
    if (dev_history.empty()) return false;
    std::size_t best = 0;
    for (std::size_t i = 1; i < dev_history.size(); ++i)
        if (dev_history[i] < dev_history[best]) best = i;
    return dev_history.size() - 1 - best > static_cast<std::size_t>(patience);
}

} // namespace normstab
