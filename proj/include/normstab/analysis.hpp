#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "normstab/model.hpp"
#include "normstab/tasks.hpp"
#include "normstab/tensor.hpp"

namespace normstab {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Eigenvalue moduli of the recurrent transition matrix
// ---------------------------------------------------------------------------

struct SpectrumReport {
    std::vector<double> moduli; // sorted descending, length n
    double eig_sum_real = 0.0;  // sum of computed eigenvalues (imag parts cancel)
    double trace = 0.0;
    double moduli_product = 0.0;
    double det_abs = 0.0;
};

namespace detail {

// Householder similarity reduction to upper Hessenberg, in place.
inline void hessenberg_reduce(std::vector<double>& a, std::size_t n) {
    auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double xnorm = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) xnorm += A(i, k) * A(i, k);
        xnorm = std::sqrt(xnorm);
        if (xnorm == 0.0) continue;
        const double x0 = A(k + 1, k);
        const double alpha = x0 >= 0.0 ? -xnorm : xnorm;
        double vnorm_sq = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = A(i, k);
            if (i == k + 1) v[i] -= alpha;
            vnorm_sq += v[i] * v[i];
        }
        if (vnorm_sq == 0.0) continue;
        const double two_over = 2.0 / vnorm_sq;
        // A <- P A with P = I - 2 v v^T / (v^T v)
        for (std::size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) dot += v[i] * A(i, j);
            dot *= two_over;
            for (std::size_t i = k + 1; i < n; ++i) A(i, j) -= dot * v[i];
        }
        // A <- A P
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) dot += A(i, j) * v[j];
            dot *= two_over;
            for (std::size_t j = k + 1; j < n; ++j) A(i, j) -= dot * v[j];
        }
        // enforce exact zeros below the subdiagonal in column k
        A(k + 1, k) = alpha;
        for (std::size_t i = k + 2; i < n; ++i) A(i, k) = 0.0;
    }
}

// Francis double-shift QR on an upper Hessenberg matrix; eigenvalues only.
// EISPACK hqr lineage. Throws after the iteration cap.
inline void hessenberg_qr_eigenvalues(std::vector<double>& a, std::size_t n,
                                      std::vector<double>& wr,
                                      std::vector<double>& wi,
                                      std::size_t max_total_iters) {
    auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    wr.assign(n, 0.0);
    wi.assign(n, 0.0);

    double anorm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = (i == 0 ? 0 : i - 1); j < n; ++j)
            anorm += std::fabs(A(i, j));
    if (anorm == 0.0) return; // zero matrix

    std::size_t total_iters = 0;
    long nn = static_cast<long>(n) - 1;
    double t_shift = 0.0;
    while (nn >= 0) {
        std::size_t its = 0;
        long l;
        for (;;) {
            // look for a negligible subdiagonal element
            for (l = nn; l >= 1; --l) {
                double s = std::fabs(A(l - 1, l - 1)) + std::fabs(A(l, l));
                if (s == 0.0) s = anorm;
                if (std::fabs(A(l, l - 1)) + s == s) {
                    A(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 0) l = 0;
            double x = A(nn, nn);
            if (l == nn) { // one real eigenvalue deflates
                wr[nn] = x + t_shift;
                wi[nn] = 0.0;
                --nn;
                break;
            }
            double y = A(nn - 1, nn - 1);
            double w = A(nn, nn - 1) * A(nn - 1, nn);
            if (l == nn - 1) { // a 2x2 block deflates
                double p = 0.5 * (y - x);
                double q = p * p + w;
                double z = std::sqrt(std::fabs(q));
                x += t_shift;
                if (q >= 0.0) { // real pair
                    z = p + (p >= 0.0 ? z : -z);
                    wr[nn - 1] = wr[nn] = x + z;
                    if (z != 0.0) wr[nn] = x - w / z;
                    wi[nn - 1] = wi[nn] = 0.0;
                } else { // complex conjugate pair
                    wr[nn - 1] = wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if (total_iters >= max_total_iters)
                throw NumericalError(
                    "eigenvalue QR iteration failed to converge after " +
                    std::to_string(total_iters) + " iterations (block " +
                    std::to_string(l) + ".." + std::to_string(nn) + ")");
            if (its == 10 || its == 20) { // exceptional shift
                t_shift += x;
                for (long i = 0; i <= nn; ++i) A(i, i) -= x;
                double s = std::fabs(A(nn, nn - 1)) + std::fabs(A(nn - 1, nn - 2));
                y = x = 0.75 * s;
                w = -0.4375 * s * s;
            }
            ++its;
            ++total_iters;
            // find two consecutive small subdiagonals for the implicit start
            long m;
            double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
            for (m = nn - 2; m >= l; --m) {
                z = A(m, m);
                double rr = x - z;
                double ss = y - z;
                p = (rr * ss - w) / A(m + 1, m) + A(m, m + 1);
                q = A(m + 1, m + 1) - z - rr - ss;
                r = A(m + 2, m + 1);
                double s = std::fabs(p) + std::fabs(q) + std::fabs(r);
                p /= s; q /= s; r /= s;
                if (m == l) break;
                double u = std::fabs(A(m, m - 1)) * (std::fabs(q) + std::fabs(r));
                double v = std::fabs(p) * (std::fabs(A(m - 1, m - 1)) +
                                           std::fabs(z) + std::fabs(A(m + 1, m + 1)));
                if (u + v == v) break;
            }
            for (long i = m + 2; i <= nn; ++i) {
                A(i, i - 2) = 0.0;
                if (i != m + 2) A(i, i - 3) = 0.0;
            }
            // chase the bulge
            for (long k = m; k <= nn - 1; ++k) {
                if (k != m) {
                    p = A(k, k - 1);
                    q = A(k + 1, k - 1);
                    r = (k != nn - 1) ? A(k + 2, k - 1) : 0.0;
                    x = std::fabs(p) + std::fabs(q) + std::fabs(r);
                    if (x != 0.0) { p /= x; q /= x; r /= x; }
                }
                double s = std::sqrt(p * p + q * q + r * r);
                if (p < 0.0) s = -s;
                if (s == 0.0) continue;
                if (k == m) {
                    if (l != m) A(k, k - 1) = -A(k, k - 1);
                } else {
                    A(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                double yy = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for (long j = k; j <= nn; ++j) { // row transform
                    double pp = A(k, j) + q * A(k + 1, j);
                    if (k != nn - 1) {
                        pp += r * A(k + 2, j);
                        A(k + 2, j) -= pp * z;
                    }
                    A(k + 1, j) -= pp * yy;
                    A(k, j) -= pp * x;
                }
                const long mmin = std::min(nn, k + 3);
                for (long i = l; i <= mmin; ++i) { // column transform
                    double pp = x * A(i, k) + yy * A(i, k + 1);
                    if (k != nn - 1) {
                        pp += z * A(i, k + 2);
                        A(i, k + 2) -= pp * r;
                    }
                    A(i, k + 1) -= pp * q;
                    A(i, k) -= pp;
                }
            }
        }
    }
}

// |det| by LU with partial pivoting.
inline double det_abs_lu(const Tensor& w) {
    const std::size_t n = w.dim(0);
    std::vector<double> a(w.data(), w.data() + n * n);
    auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    double det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::fabs(A(i, k)) > std::fabs(A(piv, k))) piv = i;
        if (A(piv, k) == 0.0) return 0.0;
        if (piv != k)
            for (std::size_t j = 0; j < n; ++j) std::swap(A(piv, j), A(k, j));
        det *= A(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = A(i, k) / A(k, k);
            for (std::size_t j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
        }
    }
    return std::fabs(det);
}

} // namespace detail

inline SpectrumReport eig_moduli(const Tensor& w) {
    if (w.rank() != 2 || w.dim(0) != w.dim(1))
        throw DimensionError("eig_moduli expects a square matrix");
    const std::size_t n = w.dim(0);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!std::isfinite(w[i]))
            throw ParameterError("eig_moduli requires finite entries");

    std::vector<double> a(w.data(), w.data() + n * n);
    detail::hessenberg_reduce(a, n);
    std::vector<double> wr, wi;
    detail::hessenberg_qr_eigenvalues(a, n, wr, wi, 30 * n + 30);

    SpectrumReport rep;
    rep.moduli.resize(n);
    rep.moduli_product = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        rep.moduli[i] = std::hypot(wr[i], wi[i]);
        rep.eig_sum_real += wr[i];
        rep.moduli_product *= rep.moduli[i];
    }
    std::sort(rep.moduli.begin(), rep.moduli.end(), std::greater<double>());
    for (std::size_t i = 0; i < n; ++i) rep.trace += w.at(i, i);
    rep.det_abs = detail::det_abs_lu(w);
    return rep;
}

// The recurrent transition matrix whose spectrum the diagnostics look at.
inline const Tensor& transition_matrix(const Model& m) {
    if (m.is_lstm())
        throw ParameterError("spectrum diagnostics target SRNN-family W_hh");
    return m.srnn.w_hh;
}

// ---------------------------------------------------------------------------
// Out-of-horizon norm and cost trajectories
// ---------------------------------------------------------------------------

struct NormTrajectoryReport {
    std::size_t horizon = 0;
    bool has_cells = false;
    // one row per time-step t = 1..horizon
    std::vector<double> mean_h_norm, std_h_norm, mean_cost;
    std::vector<double> mean_c_norm, std_c_norm;
};

// A sequence paired with its per-step cost hook: for language modeling the
// targets are the shifted symbols; for the adding task the target is the
// final sum evaluated against the readout at every step.
struct EvalSequence {
    Tensor inputs;            // T x d, T >= horizon
    std::vector<int> targets; // per-step symbol ids (LM) or empty
    double scalar_target = 0.0;
    bool has_symbols = false;
};

inline EvalSequence eval_sequence_from_ids(const std::vector<int>& ids,
                                           std::size_t vocab,
                                           std::size_t horizon) {
    if (ids.size() < horizon + 1)
        throw ParameterError("id stream shorter than horizon + 1");
    EvalSequence s;
    s.has_symbols = true;
    s.inputs = Tensor({horizon, vocab});
    s.targets.resize(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        s.inputs.at(t, static_cast<std::size_t>(ids[t])) = 1.0;
        s.targets[t] = ids[t + 1];
    }
    return s;
}

inline EvalSequence eval_sequence_from_adding(const AddingExample& ex) {
    EvalSequence s;
    s.inputs = ex.inputs();
    s.scalar_target = ex.target;
    return s;
}

inline NormTrajectoryReport norm_trajectory(
    const Model& model, const std::vector<EvalSequence>& sequences,
    std::size_t horizon) {
    if (horizon < 1) throw ParameterError("horizon must be >= 1");
    if (sequences.empty()) throw ParameterError("need at least one sequence");

    const std::size_t n = model.hidden_size();
    NormTrajectoryReport rep;
    rep.horizon = horizon;
    rep.has_cells = model.is_lstm();
    rep.mean_h_norm.assign(horizon, 0.0);
    rep.std_h_norm.assign(horizon, 0.0);
    rep.mean_cost.assign(horizon, 0.0);
    if (rep.has_cells) {
        rep.mean_c_norm.assign(horizon, 0.0);
        rep.std_c_norm.assign(horizon, 0.0);
    }
    std::vector<double> h_sq(horizon, 0.0), c_sq(horizon, 0.0);

    std::vector<double> logits(model.output_size());
    for (const EvalSequence& seq : sequences) {
        if (seq.inputs.dim(0) < horizon)
            throw ParameterError("eval sequence shorter than horizon");
        CellState st(n);
        for (std::size_t t = 0; t < horizon; ++t) {
            model_step(model, st, seq.inputs.data() + t * seq.inputs.dim(1));
            const double hn = l2_norm(st.h.data(), n);
            rep.mean_h_norm[t] += hn;
            h_sq[t] += hn * hn;
            if (rep.has_cells) {
                const double cn = l2_norm(st.c.data(), n);
                rep.mean_c_norm[t] += cn;
                c_sq[t] += cn * cn;
            }
            model.readout(st.h.data(), logits.data());
            double cost;
            if (seq.has_symbols) {
                cost = softmax_xent(logits.data(), logits.size(),
                                    seq.targets[t], nullptr);
            } else {
                cost = mse_loss(logits[0], seq.scalar_target);
            }
            // explosion shows up as inf, not as an error
            rep.mean_cost[t] += std::isfinite(cost)
                                    ? cost
                                    : std::numeric_limits<double>::infinity();
        }
    }
    const double count = static_cast<double>(sequences.size());
    for (std::size_t t = 0; t < horizon; ++t) {
        rep.mean_h_norm[t] /= count;
        rep.mean_cost[t] /= count;
        const double var_h =
            std::max(0.0, h_sq[t] / count - rep.mean_h_norm[t] * rep.mean_h_norm[t]);
        rep.std_h_norm[t] = std::sqrt(var_h);
        if (rep.has_cells) {
            rep.mean_c_norm[t] /= count;
            const double var_c = std::max(
                0.0, c_sq[t] / count - rep.mean_c_norm[t] * rep.mean_c_norm[t]);
            rep.std_c_norm[t] = std::sqrt(var_c);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Forget-gate distribution
// ---------------------------------------------------------------------------

struct ForgetGateReport {
    std::vector<double> avg_forget_gate; // per memory cell, sorted ascending
};

inline ForgetGateReport forget_gate_stats(
    const Model& model, const std::vector<EvalSequence>& sequences) {
    if (!model.is_lstm())
        throw ParameterError("forget_gate_stats requires an LSTM model");
    if (sequences.empty()) throw ParameterError("need at least one sequence");
    const std::size_t n = model.hidden_size();
    std::vector<double> sum(n, 0.0);
    std::size_t steps = 0;
    std::vector<double> fgate(n);
    for (const EvalSequence& seq : sequences) {
        CellState st(n);
        const std::size_t T = seq.inputs.dim(0);
        for (std::size_t t = 0; t < T; ++t) {
            model_step(model, st, seq.inputs.data() + t * seq.inputs.dim(1),
                       fgate.data());
            for (std::size_t j = 0; j < n; ++j) sum[j] += fgate[j];
            ++steps;
        }
    }
    ForgetGateReport rep;
    rep.avg_forget_gate.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        rep.avg_forget_gate[j] = sum[j] / static_cast<double>(steps);
    std::sort(rep.avg_forget_gate.begin(), rep.avg_forget_gate.end());
    return rep;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

} // namespace detail

inline void export_csv(const NormTrajectoryReport& rep, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "t,mean_h_norm,std_h_norm,mean_cost";
    if (rep.has_cells) os << ",mean_c_norm,std_c_norm";
    os << "\n";
    for (std::size_t t = 0; t < rep.horizon; ++t) {
        os << (t + 1) << "," << detail::csv_num(rep.mean_h_norm[t]) << ","
           << detail::csv_num(rep.std_h_norm[t]) << ","
           << detail::csv_num(rep.mean_cost[t]);
        if (rep.has_cells)
            os << "," << detail::csv_num(rep.mean_c_norm[t]) << ","
               << detail::csv_num(rep.std_c_norm[t]);
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

inline void export_csv(const SpectrumReport& rep, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "rank,modulus\n";
    for (std::size_t i = 0; i < rep.moduli.size(); ++i)
        os << (i + 1) << "," << detail::csv_num(rep.moduli[i]) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

inline void export_csv(const ForgetGateReport& rep, const std::string& path) {
    auto os = detail::open_csv(path);
    os << "rank,avg_forget_gate\n";
    for (std::size_t i = 0; i < rep.avg_forget_gate.size(); ++i)
        os << (i + 1) << "," << detail::csv_num(rep.avg_forget_gate[i]) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

} // namespace normstab
