#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "normstab/tensor.hpp"

namespace normstab {

// One adding-task sequence: pairs (n_t, i_t) with exactly two marker bits
// set; the target is the sum of the two marked values.
struct AddingExample {
    std::vector<double> values;  // T entries in [0, 1]
    std::vector<int> markers;    // T entries, exactly two ones
    double target = 0.0;

    std::size_t length() const { return values.size(); }

    // Input at step t is the pair (n_t, i_t); d = 2.
    Tensor inputs() const {
        const std::size_t T = values.size();
        Tensor x({T, 2});
        for (std::size_t t = 0; t < T; ++t) {
            x.at(t, 0) = values[t];
            x.at(t, 1) = static_cast<double>(markers[t]);
        }
        return x;
    }
};

// Marker positions are uniform over all T positions, distinct. The
// restricted first-half/second-half variant is available behind a flag.
inline std::vector<AddingExample> gen_adding(Rng& rng, std::size_t T,
                                             std::size_t count,
                                             bool split_halves = false) {
    if (T < 2) throw ParameterError("adding task needs T >= 2");
    std::vector<AddingExample> out;
    out.reserve(count);
    for (std::size_t e = 0; e < count; ++e) {
        AddingExample ex;
        ex.values.resize(T);
        ex.markers.assign(T, 0);
        for (std::size_t t = 0; t < T; ++t) ex.values[t] = rng.next_double();
        std::size_t a, b;
        if (split_halves) {
            a = rng.next_index(T / 2);
            b = T / 2 + rng.next_index(T - T / 2);
        } else {
            a = rng.next_index(T);
            do { b = rng.next_index(T); } while (b == a);
        }
        ex.markers[a] = 1;
        ex.markers[b] = 1;
        ex.target = ex.values[a] + ex.values[b];
        out.push_back(std::move(ex));
    }
    return out;
}

struct AddingBaselines {
    // Predict one marked number plus the other's expectation: Var(U[0,1]).
    double short_sighted = 1.0 / 12.0;
    // Best constant (the mean, 1.0): Var(n_a + n_b) = 2/12.
    double constant_predictor = 1.0 / 6.0;
};

inline AddingBaselines adding_baselines() { return {}; }

inline double mse_loss(double pred, double target, double* grad = nullptr) {
    const double d = pred - target;
    if (grad) *grad = 2.0 * d;
    return d * d;
}

// Byte-level corpus with a vocabulary built from the train split. Symbols
// unseen in training map to a reserved unknown id (vocab entry 0).
struct CharCorpus {
    std::vector<int> ids;              // whole corpus as symbol ids
    std::vector<unsigned char> symbols; // id -> byte, id 0 is <unk>
    std::size_t train_end = 0;
    std::size_t dev_end = 0;

    std::size_t vocab_size() const { return symbols.size(); }

    static CharCorpus from_bytes(const std::string& text,
                                 double train_frac = 0.90,
                                 double dev_frac = 0.05) {
        if (text.empty()) throw ParameterError("corpus is empty");
        CharCorpus c;
        c.train_end = static_cast<std::size_t>(text.size() * train_frac);
        c.dev_end =
            c.train_end + static_cast<std::size_t>(text.size() * dev_frac);
        if (c.train_end < 2) throw ParameterError("train split too small");

        bool seen[256] = {false};
        for (std::size_t i = 0; i < c.train_end; ++i)
            seen[static_cast<unsigned char>(text[i])] = true;
        int id_of[256];
        std::fill(std::begin(id_of), std::end(id_of), 0);
        c.symbols.push_back(0); // unknown
        for (int b = 0; b < 256; ++b) {
            if (seen[b]) {
                id_of[b] = static_cast<int>(c.symbols.size());
                c.symbols.push_back(static_cast<unsigned char>(b));
            }
        }
        c.ids.reserve(text.size());
        for (char ch : text)
            c.ids.push_back(id_of[static_cast<unsigned char>(ch)]);
        return c;
    }

    static CharCorpus from_file(const std::string& path,
                                double train_frac = 0.90,
                                double dev_frac = 0.05) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw ParameterError("cannot open corpus file: " + path);
        std::string text((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
        return from_bytes(text, train_frac, dev_frac);
    }

    void write_vocab(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw ParameterError("cannot write vocab file: " + path);
        for (std::size_t i = 0; i < symbols.size(); ++i)
            os << i << "\t" << static_cast<int>(symbols[i]) << "\n";
    }

    enum class Split { Train, Dev, Test };

    std::pair<std::size_t, std::size_t> split_range(Split s) const {
        switch (s) {
            case Split::Train: return {0, train_end};
            case Split::Dev: return {train_end, dev_end};
            case Split::Test: return {dev_end, ids.size()};
        }
        return {0, 0};
    }
};

// One window: seq_len input symbols starting at offset s; the target at
// step t is the symbol at s+t+1 (the shifted-by-one view). Windows advance
// by seq_len and never overlap; the trailing window is dropped when no
// following symbol exists for its last step.
struct CharWindow {
    std::vector<int> inputs;  // seq_len symbols
    std::vector<int> targets; // seq_len symbols, shifted by one
};

inline std::vector<CharWindow> char_windows(const CharCorpus& corpus,
                                            CharCorpus::Split split,
                                            std::size_t seq_len) {
    if (seq_len < 1) throw ParameterError("seq_len must be >= 1");
    auto [lo, hi] = corpus.split_range(split);
    if (hi - lo < seq_len + 1)
        throw ParameterError("corpus split shorter than seq_len + 1");
    std::vector<CharWindow> windows;
    for (std::size_t s = lo; s + seq_len + 1 <= hi; s += seq_len) {
        CharWindow w;
        w.inputs.assign(corpus.ids.begin() + s, corpus.ids.begin() + s + seq_len);
        w.targets.assign(corpus.ids.begin() + s + 1,
                         corpus.ids.begin() + s + seq_len + 1);
        windows.push_back(std::move(w));
    }
    return windows;
}

struct CharBatch {
    std::vector<int> inputs;  // seq_len per sequence, flattened
    std::vector<int> targets;
    std::size_t seq_len = 0;
    std::size_t count = 0;

    const int* input_seq(std::size_t s) const {
        return inputs.data() + s * seq_len;
    }
    const int* target_seq(std::size_t s) const {
        return targets.data() + s * seq_len;
    }
};

inline std::vector<CharBatch> char_batches(
    const std::vector<CharWindow>& windows, std::size_t batch_size,
    const std::vector<std::size_t>* order = nullptr) {
    if (windows.empty()) throw ParameterError("no windows to batch");
    const std::size_t seq_len = windows[0].inputs.size();
    std::vector<CharBatch> batches;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        CharBatch b;
        b.seq_len = seq_len;
        const std::size_t end = std::min(start + batch_size, windows.size());
        b.count = end - start;
        for (std::size_t w = start; w < end; ++w) {
            const auto& win = windows[order ? (*order)[w] : w];
            b.inputs.insert(b.inputs.end(), win.inputs.begin(),
                            win.inputs.end());
            b.targets.insert(b.targets.end(), win.targets.begin(),
                             win.targets.end());
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

// Convenience wrapper over the window/batch pipeline.
inline std::vector<CharBatch> char_batches(const CharCorpus& corpus,
                                           CharCorpus::Split split,
                                           std::size_t seq_len,
                                           std::size_t batch_size) {
    return char_batches(char_windows(corpus, split, seq_len), batch_size);
}

// Numerically stable log-softmax cross-entropy in nats. Writes the softmax
// gradient (p - onehot) into grad when given.
inline double softmax_xent(const double* logits, std::size_t v, int target_id,
                           double* grad = nullptr) {
    if (v < 2) throw ParameterError("vocabulary size must be >= 2");
    if (target_id < 0 || static_cast<std::size_t>(target_id) >= v)
        throw ParameterError("target id out of range");
    double mx = logits[0];
    for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) z += std::exp(logits[i] - mx);
    const double logz = std::log(z) + mx;
    if (grad) {
        for (std::size_t i = 0; i < v; ++i)
            grad[i] = std::exp(logits[i] - logz) -
                      (static_cast<int>(i) == target_id ? 1.0 : 0.0);
    }
    return logz - logits[target_id];
}

inline double softmax_xent(const Tensor& logits, int target_id,
                           Tensor* grad = nullptr) {
    if (logits.rank() != 1) throw DimensionError("logits must be rank 1");
    if (grad) *grad = Tensor({logits.dim(0)});
    return softmax_xent(logits.data(), logits.dim(0), target_id,
                        grad ? grad->data() : nullptr);
}

inline double bits_per_character(double total_nats, std::size_t total_symbols) {
    if (total_symbols == 0) throw ParameterError("no symbols");
    return total_nats / static_cast<double>(total_symbols) / std::log(2.0);
}

} // namespace normstab
