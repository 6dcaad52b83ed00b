#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "normstab/tensor.hpp"

namespace normstab {

enum class Activation { Tanh, Relu, Trec };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Trec: return "trec";
    }
    return "?";
}

// W += a (outer) da, W is [r x c].
inline void outer_accum(const double* a, std::size_t r, const double* da,
                        std::size_t c, Tensor& w) {
    for (std::size_t i = 0; i < r; ++i) {
        const double av = a[i];
        if (av == 0.0) continue;
        double* wrow = w.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) wrow[j] += av * da[j];
    }
}

// Row-vector convention throughout: pre_t = x_t W_xh + h_{t-1} W_hh + b.
struct SrnnParams {
    Tensor w_xh; // [d x n]
    Tensor w_hh; // [n x n]
    Tensor b;    // [n]; empty in the zero-bias variant
    Activation activation = Activation::Tanh;

    std::size_t hidden_size() const { return w_hh.dim(0); }
    std::size_t input_size() const { return w_xh.dim(0); }
    bool has_bias() const { return b.size() > 0; }

    void validate() const {
        if (w_hh.rank() != 2 || w_hh.dim(0) != w_hh.dim(1))
            throw StructuralError("W_hh must be square");
        if (w_xh.rank() != 2 || w_xh.dim(1) != w_hh.dim(0))
            throw StructuralError("W_xh columns must match hidden size");
        if (has_bias() && b.dim(0) != w_hh.dim(0))
            throw StructuralError("bias length must match hidden size");
        if (activation == Activation::Trec && has_bias())
            throw StructuralError("trec is the zero-bias variant; bias must be absent");
    }

    template <class F>
    void for_each_param(F&& f) {
        f("w_xh", w_xh);
        f("w_hh", w_hh);
        if (has_bias()) f("b", b);
    }
};

// Standard SRNN init: uniform weights, W_hh identity for IRNN.
inline SrnnParams make_srnn(Rng& rng, std::size_t d, std::size_t n,
                            Activation act, bool with_bias, bool identity_whh,
                            double lo, double hi) {
    SrnnParams p;
    p.activation = act;
    p.w_xh = uniform_init(rng, {d, n}, lo, hi);
    p.w_hh = identity_whh ? identity_init(n) : uniform_init(rng, {n, n}, lo, hi);
    if (with_bias && act != Activation::Trec) p.b = Tensor({n});
    p.validate();
    return p;
}

struct LstmParams {
    // Gate order: input (i), forget (f), output (o), input modulation (g).
    Tensor w_xi, w_hi, b_i;
    Tensor w_xf, w_hf, b_f;
    Tensor w_xo, w_ho, b_o;
    Tensor w_xg, w_hg, b_g;
    bool output_tanh = true;

    std::size_t hidden_size() const { return w_hi.dim(0); }
    std::size_t input_size() const { return w_xi.dim(0); }

    void validate() const {
        const std::size_t n = w_hi.dim(0), d = w_xi.dim(0);
        for (const Tensor* t : {&w_hi, &w_hf, &w_ho, &w_hg})
            if (t->rank() != 2 || t->dim(0) != n || t->dim(1) != n)
                throw StructuralError("recurrent gate matrices must be n x n");
        for (const Tensor* t : {&w_xi, &w_xf, &w_xo, &w_xg})
            if (t->rank() != 2 || t->dim(0) != d || t->dim(1) != n)
                throw StructuralError("input gate matrices must be d x n");
        for (const Tensor* t : {&b_i, &b_f, &b_o, &b_g})
            if (t->rank() != 1 || t->dim(0) != n)
                throw StructuralError("gate biases must be length n");
    }

    template <class F>
    void for_each_param(F&& f) {
        f("w_xi", w_xi); f("w_hi", w_hi); f("b_i", b_i);
        f("w_xf", w_xf); f("w_hf", w_hf); f("b_f", b_f);
        f("w_xo", w_xo); f("w_ho", w_ho); f("b_o", b_o);
        f("w_xg", w_xg); f("w_hg", w_hg); f("b_g", b_g);
    }
};

inline LstmParams make_lstm(Rng& rng, std::size_t d, std::size_t n,
                            bool output_tanh, double lo, double hi,
                            double forget_bias = 1.0) {
    LstmParams p;
    p.output_tanh = output_tanh;
    auto w = [&](std::size_t r, std::size_t c) {
        return uniform_init(rng, {r, c}, lo, hi);
    };
    p.w_xi = w(d, n); p.w_hi = w(n, n); p.b_i = Tensor({n});
    p.w_xf = w(d, n); p.w_hf = w(n, n); p.b_f = Tensor({n});
    p.w_xo = w(d, n); p.w_ho = w(n, n); p.b_o = Tensor({n});
    p.w_xg = w(d, n); p.w_hg = w(n, n); p.b_g = Tensor({n});
    p.b_f.fill(forget_bias);
    p.validate();
    return p;
}

// The full unrolled state h_0..h_T (plus memory cells and gate activations
// for LSTM). Inputs are retained for the backward pass. Non-finite values
// are allowed; explosion is a studied behaviour, not an error.
struct Trajectory {
    std::size_t steps = 0;  // T
    std::size_t n = 0;      // hidden size
    std::size_t d = 0;      // input size
    bool lstm = false;
    bool output_tanh = true;

    std::vector<double> hiddens; // (T+1) x n
    std::vector<double> cells;   // (T+1) x n, LSTM only
    std::vector<double> inputs;  // T x d
    // LSTM backward cache, all T x n
    std::vector<double> gate_i, gate_f, gate_o, gate_g, tanh_c;

    const double* h(std::size_t t) const { return hiddens.data() + t * n; }
    double* h(std::size_t t) { return hiddens.data() + t * n; }
    const double* c(std::size_t t) const { return cells.data() + t * n; }
    double* c(std::size_t t) { return cells.data() + t * n; }
    const double* x(std::size_t t) const { return inputs.data() + t * d; }

    Tensor hidden(std::size_t t) const {
        return Tensor({n}, std::vector<double>(h(t), h(t) + n));
    }
    Tensor cell(std::size_t t) const {
        return Tensor({n}, std::vector<double>(c(t), c(t) + n));
    }

    // Hand-built trajectory for penalty tests: states are h_0..h_T.
    static Trajectory from_states(const std::vector<Tensor>& states) {
        if (states.empty()) throw ParameterError("trajectory needs h_0");
        Trajectory tr;
        tr.steps = states.size() - 1;
        tr.n = states[0].dim(0);
        for (const Tensor& s : states) {
            if (s.dim(0) != tr.n) throw StructuralError("state sizes differ");
            tr.hiddens.insert(tr.hiddens.end(), s.data(), s.data() + tr.n);
        }
        return tr;
    }
};

inline double apply_activation(Activation a, double v) {
    switch (a) {
        case Activation::Tanh: return std::tanh(v);
        case Activation::Relu:
        case Activation::Trec: return v > 0.0 ? v : 0.0;
    }
    return v;
}

// Derivative expressed through the activation output; relu'(0) = 0.
inline double activation_grad_from_output(Activation a, double h) {
    switch (a) {
        case Activation::Tanh: return 1.0 - h * h;
        case Activation::Relu:
        case Activation::Trec: return h > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

inline Trajectory srnn_forward(const SrnnParams& p, const Tensor& x,
                               const Tensor& h0) {
    p.validate();
    if (x.rank() != 2 || x.dim(1) != p.input_size())
        throw DimensionError("input must be T x d, got " + x.shape_str());
    if (h0.rank() != 1 || h0.dim(0) != p.hidden_size())
        throw DimensionError("h0 must be length n");

    const std::size_t T = x.dim(0), n = p.hidden_size(), d = p.input_size();
    Trajectory tr;
    tr.steps = T; tr.n = n; tr.d = d;
    tr.hiddens.assign((T + 1) * n, 0.0);
    tr.inputs.assign(x.data(), x.data() + T * d);
    std::copy(h0.data(), h0.data() + n, tr.h(0));

    std::vector<double> pre(n);
    for (std::size_t t = 1; t <= T; ++t) {
        if (p.has_bias())
            std::copy(p.b.data(), p.b.data() + n, pre.begin());
        else
            std::fill(pre.begin(), pre.end(), 0.0);
        vecmat_accum(tr.x(t - 1), p.w_xh, pre.data());
        vecmat_accum(tr.h(t - 1), p.w_hh, pre.data());
        double* ht = tr.h(t);
        for (std::size_t j = 0; j < n; ++j)
            ht[j] = apply_activation(p.activation, pre[j]);
    }
    return tr;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Trajectory lstm_forward(const LstmParams& p, const Tensor& x,
                               const Tensor& h0, const Tensor& c0) {
    p.validate();
    if (x.rank() != 2 || x.dim(1) != p.input_size())
        throw DimensionError("input must be T x d, got " + x.shape_str());
    const std::size_t T = x.dim(0), n = p.hidden_size(), d = p.input_size();
    if (h0.dim(0) != n || c0.dim(0) != n)
        throw DimensionError("h0/c0 must be length n");

    Trajectory tr;
    tr.steps = T; tr.n = n; tr.d = d;
    tr.lstm = true;
    tr.output_tanh = p.output_tanh;
    tr.hiddens.assign((T + 1) * n, 0.0);
    tr.cells.assign((T + 1) * n, 0.0);
    tr.inputs.assign(x.data(), x.data() + T * d);
    tr.gate_i.assign(T * n, 0.0);
    tr.gate_f.assign(T * n, 0.0);
    tr.gate_o.assign(T * n, 0.0);
    tr.gate_g.assign(T * n, 0.0);
    tr.tanh_c.assign(T * n, 0.0);
    std::copy(h0.data(), h0.data() + n, tr.h(0));
    std::copy(c0.data(), c0.data() + n, tr.c(0));

    std::vector<double> ai(n), af(n), ao(n), ag(n);
    for (std::size_t t = 1; t <= T; ++t) {
        const double* xt = tr.x(t - 1);
        const double* hp = tr.h(t - 1);
        std::copy(p.b_i.data(), p.b_i.data() + n, ai.begin());
        std::copy(p.b_f.data(), p.b_f.data() + n, af.begin());
        std::copy(p.b_o.data(), p.b_o.data() + n, ao.begin());
        std::copy(p.b_g.data(), p.b_g.data() + n, ag.begin());
        vecmat_accum(xt, p.w_xi, ai.data()); vecmat_accum(hp, p.w_hi, ai.data());
        vecmat_accum(xt, p.w_xf, af.data()); vecmat_accum(hp, p.w_hf, af.data());
        vecmat_accum(xt, p.w_xo, ao.data()); vecmat_accum(hp, p.w_ho, ao.data());
        vecmat_accum(xt, p.w_xg, ag.data()); vecmat_accum(hp, p.w_hg, ag.data());

        const std::size_t off = (t - 1) * n;
        const double* cp = tr.c(t - 1);
        double* ct = tr.c(t);
        double* ht = tr.h(t);
        for (std::size_t j = 0; j < n; ++j) {
            const double iv = sigmoid(ai[j]);
            const double fv = sigmoid(af[j]);
            const double ov = sigmoid(ao[j]);
            const double gv = std::tanh(ag[j]);
            tr.gate_i[off + j] = iv;
            tr.gate_f[off + j] = fv;
            tr.gate_o[off + j] = ov;
            tr.gate_g[off + j] = gv;
            ct[j] = fv * cp[j] + iv * gv;
            const double tc = std::tanh(ct[j]);
            tr.tanh_c[off + j] = tc;
            ht[j] = ov * (p.output_tanh ? tc : ct[j]);
        }
    }
    return tr;
}

struct SrnnGrads {
    Tensor w_xh, w_hh, b;
    Tensor h0;
    bool has_bias = false;
};

// Per-time-step upstream gradients dh must be (T+1) x n flat; contributions
// from the task loss and the penalty compose additively before this call.
inline SrnnGrads srnn_backward(const SrnnParams& p, const Trajectory& tr,
                               const std::vector<double>& dh) {
    p.validate();
    const std::size_t T = tr.steps, n = tr.n, d = tr.d;
    if (tr.lstm) throw StructuralError("trajectory was produced by an LSTM");
    if (n != p.hidden_size() || d != p.input_size())
        throw StructuralError("trajectory does not match params");
    if (dh.size() != (T + 1) * n)
        throw StructuralError("dh must be (T+1) x n");

    SrnnGrads g;
    g.w_xh = Tensor({d, n});
    g.w_hh = Tensor({n, n});
    g.has_bias = p.has_bias();
    if (g.has_bias) g.b = Tensor({n});
    g.h0 = Tensor({n});

    std::vector<double> carry(n, 0.0), dpre(n);
    for (std::size_t t = T; t >= 1; --t) {
        const double* ht = tr.h(t);
        for (std::size_t j = 0; j < n; ++j) {
            const double up = dh[t * n + j] + carry[j];
            dpre[j] = up * activation_grad_from_output(p.activation, ht[j]);
        }
        outer_accum(tr.x(t - 1), d, dpre.data(), n, g.w_xh);
        outer_accum(tr.h(t - 1), n, dpre.data(), n, g.w_hh);
        if (g.has_bias)
            for (std::size_t j = 0; j < n; ++j) g.b[j] += dpre[j];
        std::fill(carry.begin(), carry.end(), 0.0);
        matvec_accum(p.w_hh, dpre.data(), carry.data());
    }
    for (std::size_t j = 0; j < n; ++j) g.h0[j] = dh[j] + carry[j];
    return g;
}

struct LstmGrads {
    Tensor w_xi, w_hi, b_i;
    Tensor w_xf, w_hf, b_f;
    Tensor w_xo, w_ho, b_o;
    Tensor w_xg, w_hg, b_g;
    Tensor h0, c0;

    template <class F>
    void for_each_param(F&& f) {
        f("w_xi", w_xi); f("w_hi", w_hi); f("b_i", b_i);
        f("w_xf", w_xf); f("w_hf", w_hf); f("b_f", b_f);
        f("w_xo", w_xo); f("w_ho", w_ho); f("b_o", b_o);
        f("w_xg", w_xg); f("w_hg", w_hg); f("b_g", b_g);
    }
};

// dh and dc are (T+1) x n; dc may be empty when no memory-cell penalty is
// in play.
inline LstmGrads lstm_backward(const LstmParams& p, const Trajectory& tr,
                               const std::vector<double>& dh,
                               const std::vector<double>& dc_in) {
    p.validate();
    const std::size_t T = tr.steps, n = tr.n, d = tr.d;
    if (!tr.lstm) throw StructuralError("trajectory was not produced by an LSTM");
    if (n != p.hidden_size() || d != p.input_size())
        throw StructuralError("trajectory does not match params");
    if (dh.size() != (T + 1) * n)
        throw StructuralError("dh must be (T+1) x n");
    if (!dc_in.empty() && dc_in.size() != (T + 1) * n)
        throw StructuralError("dc must be (T+1) x n or empty");

    LstmGrads g;
    g.w_xi = Tensor({d, n}); g.w_hi = Tensor({n, n}); g.b_i = Tensor({n});
    g.w_xf = Tensor({d, n}); g.w_hf = Tensor({n, n}); g.b_f = Tensor({n});
    g.w_xo = Tensor({d, n}); g.w_ho = Tensor({n, n}); g.b_o = Tensor({n});
    g.w_xg = Tensor({d, n}); g.w_hg = Tensor({n, n}); g.b_g = Tensor({n});
    g.h0 = Tensor({n}); g.c0 = Tensor({n});

    std::vector<double> carry_h(n, 0.0), carry_c(n, 0.0);
    std::vector<double> dai(n), daf(n), dao(n), dag(n);
    for (std::size_t t = T; t >= 1; --t) {
        const std::size_t off = (t - 1) * n;
        const double* cp = tr.c(t - 1);
        const double* hp = tr.h(t - 1);
        const double* ct = tr.c(t);
        for (std::size_t j = 0; j < n; ++j) {
            const double iv = tr.gate_i[off + j];
            const double fv = tr.gate_f[off + j];
            const double ov = tr.gate_o[off + j];
            const double gv = tr.gate_g[off + j];
            const double tc = tr.tanh_c[off + j];

            const double dht = dh[t * n + j] + carry_h[j];
            const double dov = dht * (p.output_tanh ? tc : ct[j]);
            double dct = (dc_in.empty() ? 0.0 : dc_in[t * n + j]) + carry_c[j];
            dct += dht * ov * (p.output_tanh ? (1.0 - tc * tc) : 1.0);

            const double div = dct * gv;
            const double dgv = dct * iv;
            const double dfv = dct * cp[j];
            carry_c[j] = dct * fv;

            dai[j] = div * iv * (1.0 - iv);
            daf[j] = dfv * fv * (1.0 - fv);
            dao[j] = dov * ov * (1.0 - ov);
            dag[j] = dgv * (1.0 - gv * gv);
            g.b_i[j] += dai[j];
            g.b_f[j] += daf[j];
            g.b_o[j] += dao[j];
            g.b_g[j] += dag[j];
        }
        const double* xt = tr.x(t - 1);
        outer_accum(xt, d, dai.data(), n, g.w_xi);
        outer_accum(xt, d, daf.data(), n, g.w_xf);
        outer_accum(xt, d, dao.data(), n, g.w_xo);
        outer_accum(xt, d, dag.data(), n, g.w_xg);
        outer_accum(hp, n, dai.data(), n, g.w_hi);
        outer_accum(hp, n, daf.data(), n, g.w_hf);
        outer_accum(hp, n, dao.data(), n, g.w_ho);
        outer_accum(hp, n, dag.data(), n, g.w_hg);
        std::fill(carry_h.begin(), carry_h.end(), 0.0);
        matvec_accum(p.w_hi, dai.data(), carry_h.data());
        matvec_accum(p.w_hf, daf.data(), carry_h.data());
        matvec_accum(p.w_ho, dao.data(), carry_h.data());
        matvec_accum(p.w_hg, dag.data(), carry_h.data());
    }
    for (std::size_t j = 0; j < n; ++j) {
        g.h0[j] = dh[j] + carry_h[j];
        g.c0[j] = (dc_in.empty() ? 0.0 : dc_in[j]) + carry_c[j];
    }
    return g;
}

} // namespace normstab
