#pragma once

#include <string>
#include <vector>

#include "normstab/cells.hpp"
#include "normstab/checkpoint.hpp"
#include "normstab/tensor.hpp"

namespace normstab {

enum class CellKind { SrnnTanh, SrnnRelu, SrnnTrec, Irnn, Lstm, LstmNoOutputTanh };

inline CellKind parse_cell(const std::string& s) {
    if (s == "srnn_tanh") return CellKind::SrnnTanh;
    if (s == "srnn_relu") return CellKind::SrnnRelu;
    if (s == "srnn_trec") return CellKind::SrnnTrec;
    if (s == "irnn") return CellKind::Irnn;
    if (s == "lstm") return CellKind::Lstm;
    if (s == "lstm_no_output_tanh") return CellKind::LstmNoOutputTanh;
    throw ParameterError("unknown cell: " + s);
}

inline const char* cell_name(CellKind k) {
    switch (k) {
        case CellKind::SrnnTanh: return "srnn_tanh";
        case CellKind::SrnnRelu: return "srnn_relu";
        case CellKind::SrnnTrec: return "srnn_trec";
        case CellKind::Irnn: return "irnn";
        case CellKind::Lstm: return "lstm";
        case CellKind::LstmNoOutputTanh: return "lstm_no_output_tanh";
    }
    return "?";
}

inline bool cell_is_lstm(CellKind k) {
    return k == CellKind::Lstm || k == CellKind::LstmNoOutputTanh;
}

// A recurrent cell plus a linear readout h -> logits / scalar prediction.
// h0 and c0 are zero vectors and are not learned.
struct Model {
    CellKind kind = CellKind::SrnnTanh;
    SrnnParams srnn;
    LstmParams lstm;
    Tensor w_hy; // [n x out]
    Tensor b_y;  // [out]

    bool is_lstm() const { return cell_is_lstm(kind); }
    std::size_t hidden_size() const {
        return is_lstm() ? lstm.hidden_size() : srnn.hidden_size();
    }
    std::size_t input_size() const {
        return is_lstm() ? lstm.input_size() : srnn.input_size();
    }
    std::size_t output_size() const { return b_y.dim(0); }

    static Model create(CellKind kind, std::size_t d, std::size_t n,
                        std::size_t out, Rng& rng, double lo, double hi,
                        double forget_bias = 1.0) {
        Model m;
        m.kind = kind;
        switch (kind) {
            case CellKind::SrnnTanh:
                m.srnn = make_srnn(rng, d, n, Activation::Tanh, true, false, lo, hi);
                break;
            case CellKind::SrnnRelu:
                m.srnn = make_srnn(rng, d, n, Activation::Relu, true, false, lo, hi);
                break;
            case CellKind::SrnnTrec:
                m.srnn = make_srnn(rng, d, n, Activation::Trec, false, false, lo, hi);
                break;
            case CellKind::Irnn:
                m.srnn = make_srnn(rng, d, n, Activation::Relu, true, true, lo, hi);
                break;
            case CellKind::Lstm:
                m.lstm = make_lstm(rng, d, n, true, lo, hi, forget_bias);
                break;
            case CellKind::LstmNoOutputTanh:
                m.lstm = make_lstm(rng, d, n, false, lo, hi, forget_bias);
                break;
        }
        m.w_hy = uniform_init(rng, {n, out}, lo, hi);
        m.b_y = Tensor({out});
        return m;
    }

    template <class F>
    void for_each_param(F&& f) {
        if (is_lstm())
            lstm.for_each_param(f);
        else
            srnn.for_each_param(f);
        f("w_hy", w_hy);
        f("b_y", b_y);
    }

    std::vector<std::pair<std::string, Tensor*>> named_params() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for_each_param([&](const std::string& name, Tensor& t) {
            out.emplace_back(name, &t);
        });
        return out;
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for_each_param([&](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }

    Tensor zero_state() const { return Tensor({hidden_size()}); }

    Trajectory forward(const Tensor& x) const {
        const Tensor h0 = zero_state();
        if (is_lstm()) return lstm_forward(lstm, x, h0, h0);
        return srnn_forward(srnn, x, h0);
    }

    // logits = h W_hy + b_y
    void readout(const double* h, double* logits) const {
        const std::size_t out = output_size();
        std::copy(b_y.data(), b_y.data() + out, logits);
        vecmat_accum(h, w_hy, logits);
    }
};

// Streaming single-step evaluation for long-horizon diagnostics; no
// backward cache is kept.
struct CellState {
    std::vector<double> h, c;
    explicit CellState(std::size_t n) : h(n, 0.0), c(n, 0.0) {}
};

// Advances state by one input; when forget_gate_out is non-null (LSTM
// only) the forget-gate activations for this step are written there.
inline void model_step(const Model& m, CellState& st, const double* x,
                       double* forget_gate_out = nullptr) {
    const std::size_t n = m.hidden_size();
    if (!m.is_lstm()) {
        std::vector<double> pre(n, 0.0);
        if (m.srnn.has_bias())
            std::copy(m.srnn.b.data(), m.srnn.b.data() + n, pre.begin());
        vecmat_accum(x, m.srnn.w_xh, pre.data());
        vecmat_accum(st.h.data(), m.srnn.w_hh, pre.data());
        for (std::size_t j = 0; j < n; ++j)
            st.h[j] = apply_activation(m.srnn.activation, pre[j]);
        return;
    }
    const LstmParams& p = m.lstm;
    std::vector<double> ai(p.b_i.data(), p.b_i.data() + n);
    std::vector<double> af(p.b_f.data(), p.b_f.data() + n);
    std::vector<double> ao(p.b_o.data(), p.b_o.data() + n);
    std::vector<double> ag(p.b_g.data(), p.b_g.data() + n);
    vecmat_accum(x, p.w_xi, ai.data()); vecmat_accum(st.h.data(), p.w_hi, ai.data());
    vecmat_accum(x, p.w_xf, af.data()); vecmat_accum(st.h.data(), p.w_hf, af.data());
    vecmat_accum(x, p.w_xo, ao.data()); vecmat_accum(st.h.data(), p.w_ho, ao.data());
    vecmat_accum(x, p.w_xg, ag.data()); vecmat_accum(st.h.data(), p.w_hg, ag.data());
    for (std::size_t j = 0; j < n; ++j) {
        const double iv = sigmoid(ai[j]);
        const double fv = sigmoid(af[j]);
        const double ov = sigmoid(ao[j]);
        const double gv = std::tanh(ag[j]);
        st.c[j] = fv * st.c[j] + iv * gv;
        st.h[j] = ov * (p.output_tanh ? std::tanh(st.c[j]) : st.c[j]);
        if (forget_gate_out) forget_gate_out[j] = fv;
    }
}

inline Checkpoint model_to_checkpoint(Model& m) {
    Checkpoint ck;
    for (auto& [name, t] : m.named_params()) ck.tensors.emplace_back(name, *t);
    return ck;
}

inline void load_model_params(Model& m, const Checkpoint& ck) {
    for (auto& [name, t] : m.named_params()) {
        const Tensor* src = ck.find(name);
        if (!src) throw StructuralError("checkpoint missing tensor: " + name);
        if (!src->same_shape(*t))
            throw StructuralError("checkpoint shape mismatch for " + name);
        *t = *src;
    }
}

} // namespace normstab
