#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "normstab/analysis.hpp"
#include "normstab/checkpoint.hpp"
#include "normstab/model.hpp"
#include "normstab/optimizers.hpp"
#include "normstab/regularizers.hpp"
#include "normstab/tasks.hpp"

namespace normstab {

enum class TaskKind { Adding, CharLm };

inline TaskKind parse_task(const std::string& s) {
    if (s == "adding") return TaskKind::Adding;
    if (s == "char_lm") return TaskKind::CharLm;
    throw ParameterError("unknown task: " + s);
}

struct ExperimentConfig {
    TaskKind task = TaskKind::Adding;
    CellKind cell = CellKind::Irnn;
    std::size_t hidden_size = 100;
    RegularizerSpec reg;
    TrainConfig train;
    std::size_t seq_len = 100;
    std::size_t batch_size = 16;
    std::vector<std::uint64_t> seeds = {1};
    std::size_t eval_horizon = 0;

    // adding-task data sizes; char-LM sizes come from the corpus splits
    std::size_t train_examples = 2560;
    std::size_t dev_examples = 256;
    std::size_t test_examples = 512;
    bool split_halves = false; // restricted marker placement variant

    double init_lo = -0.01;
    double init_hi = 0.01;
    double forget_bias = 1.0;
    bool carry_state = false; // carry hidden state across char-LM windows

    std::string corpus_path;
    std::string out_dir = ".";

    void validate() const {
        reg.validate();
        train.validate();
        if (hidden_size < 1) throw ParameterError("hidden_size must be >= 1");
        if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
        if (seq_len < 2) throw ParameterError("seq_len must be >= 2");
        if (seeds.empty()) throw ParameterError("at least one seed required");
        if (reg.target == PenaltyTarget::MemoryCell && !cell_is_lstm(cell))
            throw ParameterError("memory_cell penalty target requires an LSTM cell");
    }
};

// ---------------------------------------------------------------------------
// Config files: line-oriented `key = value` with [section] headers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParameterError("expected boolean, got: " + v);
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
    // commas or whitespace both separate seeds; reject anything that is
    // not a full integer token so a typo cannot silently drop seeds
    std::string spaced = v;
    for (char& c : spaced)
        if (c == ',') c = ' ';
    std::vector<std::uint64_t> out;
    std::stringstream ss(spaced);
    std::string item;
    while (ss >> item) {
        std::size_t pos = 0;
        std::uint64_t seed = 0;
        try {
            seed = std::stoull(item, &pos);
        } catch (const std::exception&) {
            throw ParameterError("bad seed value: " + item);
        }
        if (pos != item.size())
            throw ParameterError("bad seed value: " + item);
        out.push_back(seed);
    }
    if (out.empty()) throw ParameterError("empty seed list");
    return out;
}

} // namespace detail

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
    using detail::parse_bool;
    if (section == "experiment") {
        if (key == "task") cfg.task = parse_task(value);
        else if (key == "cell") cfg.cell = parse_cell(value);
        else if (key == "hidden_size") cfg.hidden_size = std::stoul(value);
        else if (key == "seq_len") cfg.seq_len = std::stoul(value);
        else if (key == "batch_size") cfg.batch_size = std::stoul(value);
        else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
        else if (key == "eval_horizon") cfg.eval_horizon = std::stoul(value);
        else if (key == "train_examples") cfg.train_examples = std::stoul(value);
        else if (key == "dev_examples") cfg.dev_examples = std::stoul(value);
        else if (key == "test_examples") cfg.test_examples = std::stoul(value);
        else if (key == "split_halves") cfg.split_halves = parse_bool(value);
        else if (key == "init_lo") cfg.init_lo = std::stod(value);
        else if (key == "init_hi") cfg.init_hi = std::stod(value);
        else if (key == "forget_bias") cfg.forget_bias = std::stod(value);
        else if (key == "carry_state") cfg.carry_state = parse_bool(value);
        else if (key == "corpus") cfg.corpus_path = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else throw ParameterError("unknown key [experiment] " + key);
    } else if (section == "regularizer") {
        if (key == "variant") cfg.reg.variant = parse_variant(value);
        else if (key == "beta") cfg.reg.beta = std::stod(value);
        else if (key == "target") {
            if (value == "hidden") cfg.reg.target = PenaltyTarget::Hidden;
            else if (value == "memory_cell") cfg.reg.target = PenaltyTarget::MemoryCell;
            else throw ParameterError("unknown penalty target: " + value);
        }
        else if (key == "fixed_target") cfg.reg.fixed_target = std::stod(value);
        else if (key == "weight_noise_sigma") cfg.reg.weight_noise_sigma = std::stod(value);
        else if (key == "dropout_p") cfg.reg.dropout_p = std::stod(value);
        else if (key == "skip_first_term") cfg.reg.skip_first_term = parse_bool(value);
        else throw ParameterError("unknown key [regularizer] " + key);
    } else if (section == "train") {
        if (key == "optimizer") cfg.train.optimizer = parse_optimizer(value);
        else if (key == "learning_rate") cfg.train.learning_rate = std::stod(value);
        else if (key == "momentum") cfg.train.momentum = std::stod(value);
        else if (key == "clip_threshold") cfg.train.clip_threshold = std::stod(value);
        else if (key == "max_epochs") cfg.train.max_epochs = std::stoi(value);
        else if (key == "patience") cfg.train.patience = std::stoi(value);
        else if (key == "seed") cfg.train.seed = std::stoull(value);
        else if (key == "adam_b1") cfg.train.adam_b1 = std::stod(value);
        else if (key == "adam_b2") cfg.train.adam_b2 = std::stod(value);
        else if (key == "adam_eps") cfg.train.adam_eps = std::stod(value);
        else throw ParameterError("unknown key [train] " + key);
    } else {
        throw ParameterError("unknown config section: " + section);
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParameterError("cannot open config: " + path);
    ExperimentConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError("bad config line " + std::to_string(lineno) +
                                 ": " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw ParameterError("config entry before any [section]: " + key);
        apply_config_entry(cfg, section, key, value);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Loss composition
// ---------------------------------------------------------------------------

// One mini-batch in model-input form. For char-LM, initial_h / initial_c
// carry state across windows when the stateful variant is enabled.
struct ModelBatch {
    std::vector<Tensor> inputs;           // each T x d
    std::vector<std::vector<int>> targets; // char-LM: per-step ids
    std::vector<double> scalar_targets;   // adding: final-step target
    bool has_symbols = false;
    std::vector<std::vector<double>>* initial_h = nullptr;
    std::vector<std::vector<double>>* initial_c = nullptr;
};

struct LossResult {
    double data_loss = 0.0; // mean per sequence (char-LM: mean per symbol)
    double penalty = 0.0;   // mean per sequence
    double total = 0.0;
    bool nan_event = false;
    std::vector<Tensor> grads; // aligned with Model::params() order
};

// data loss + penalty, gradients composed through BPTT by summing the
// per-time-step contributions of both sources.
inline LossResult total_loss(Model& model, const ModelBatch& batch,
                             const RegularizerSpec& spec, Rng* noise_rng = nullptr,
                             bool train_mode = true) {
    spec.validate();
    const std::size_t n = model.hidden_size();
    const std::size_t out = model.output_size();
    const std::size_t count = batch.inputs.size();
    if (count == 0) throw ParameterError("empty batch");

    LossResult res;
    for (Tensor* p : model.params()) res.grads.emplace_back(p->shape());
    // locate the readout grads (always the last two entries)
    Tensor& g_w_hy = res.grads[res.grads.size() - 2];
    Tensor& g_b_y = res.grads.back();

    const bool use_noise =
        train_mode && spec.weight_noise_sigma > 0.0 && noise_rng;
    const bool use_dropout = train_mode && spec.dropout_p > 0.0 && noise_rng;

    // Weight noise perturbs the weights for the whole batch; the handle
    // restores the clean values before the update step sees them.
    std::unique_ptr<WeightNoiseHandle<Model>> noise;
    if (use_noise)
        noise = std::make_unique<WeightNoiseHandle<Model>>(
            model, spec.weight_noise_sigma, *noise_rng);

    std::vector<double> logits(out), dlogits(out);
    for (std::size_t s = 0; s < count; ++s) {
        const Tensor& x_in = batch.inputs[s];
        const std::size_t T = x_in.dim(0), d = x_in.dim(1);

        // dropout on the non-recurrent connections only: cell input and
        // the readout's view of the hidden state
        Tensor x = x_in;
        Tensor in_mask, out_mask;
        if (use_dropout) {
            in_mask = dropout_mask(*noise_rng, {T, d}, spec.dropout_p);
            out_mask = dropout_mask(*noise_rng, {T, n}, spec.dropout_p);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] *= in_mask[i];
        }

        Tensor h0 = model.zero_state();
        Tensor c0 = model.zero_state();
        if (batch.initial_h)
            std::copy((*batch.initial_h)[s].begin(), (*batch.initial_h)[s].end(),
                      h0.data());
        if (batch.initial_c && model.is_lstm())
            std::copy((*batch.initial_c)[s].begin(), (*batch.initial_c)[s].end(),
                      c0.data());

        Trajectory tr = model.is_lstm() ? lstm_forward(model.lstm, x, h0, c0)
                                        : srnn_forward(model.srnn, x, h0);

        std::vector<double> dh((T + 1) * n, 0.0);
        std::vector<double> dc;

        double seq_data_loss = 0.0;
        std::vector<double> h_masked(n);
        if (batch.has_symbols) {
            for (std::size_t t = 1; t <= T; ++t) {
                const double* h = tr.h(t);
                if (use_dropout) {
                    const double* mrow = out_mask.data() + (t - 1) * n;
                    for (std::size_t j = 0; j < n; ++j)
                        h_masked[j] = h[j] * mrow[j];
                    h = h_masked.data();
                }
                model.readout(h, logits.data());
                seq_data_loss += softmax_xent(logits.data(), out,
                                              batch.targets[s][t - 1],
                                              dlogits.data());
                // mean-per-symbol reduction
                const double sc = 1.0 / (static_cast<double>(T) * count);
                for (std::size_t j = 0; j < out; ++j) {
                    const double dl = dlogits[j] * sc;
                    g_b_y[j] += dl;
                    for (std::size_t i = 0; i < n; ++i)
                        g_w_hy[i * out + j] += h[i] * dl;
                }
                double* dht = dh.data() + t * n;
                std::vector<double> dlo(out);
                for (std::size_t j = 0; j < out; ++j) dlo[j] = dlogits[j] * sc;
                matvec_accum(model.w_hy, dlo.data(), dht);
                if (use_dropout) {
                    const double* mrow = out_mask.data() + (t - 1) * n;
                    for (std::size_t j = 0; j < n; ++j) dht[j] *= mrow[j];
                }
            }
            seq_data_loss /= static_cast<double>(T);
        } else {
            // linear readout on h_T only
            const double* h = tr.h(T);
            if (use_dropout) {
                const double* mrow = out_mask.data() + (T - 1) * n;
                for (std::size_t j = 0; j < n; ++j) h_masked[j] = h[j] * mrow[j];
                h = h_masked.data();
            }
            model.readout(h, logits.data());
            double dpred = 0.0;
            seq_data_loss = mse_loss(logits[0], batch.scalar_targets[s], &dpred);
            const double dl = dpred / static_cast<double>(count);
            g_b_y[0] += dl;
            for (std::size_t i = 0; i < n; ++i) g_w_hy[i * out] += h[i] * dl;
            double* dhT = dh.data() + T * n;
            for (std::size_t i = 0; i < n; ++i) dhT[i] += model.w_hy[i * out] * dl;
            if (use_dropout) {
                const double* mrow = out_mask.data() + (T - 1) * n;
                for (std::size_t j = 0; j < n; ++j) dhT[j] *= mrow[j];
            }
        }
        res.data_loss += seq_data_loss;

        double seq_penalty = 0.0;
        if (spec.variant != PenaltyVariant::None && spec.beta > 0.0) {
            seq_penalty = penalty_value(spec, tr);
            std::vector<double> pg = penalty_backward(spec, tr);
            const double sc = 1.0 / static_cast<double>(count);
            if (spec.target == PenaltyTarget::MemoryCell) {
                dc.assign((T + 1) * n, 0.0);
                for (std::size_t i = 0; i < pg.size(); ++i) dc[i] = pg[i] * sc;
            } else {
                for (std::size_t i = 0; i < pg.size(); ++i) dh[i] += pg[i] * sc;
            }
        }
        res.penalty += seq_penalty;

        std::size_t g = 0;
        if (model.is_lstm()) {
            LstmGrads lg = lstm_backward(model.lstm, tr, dh, dc);
            lg.for_each_param([&](const std::string&, Tensor& t) {
                for (std::size_t i = 0; i < t.size(); ++i) res.grads[g][i] += t[i];
                ++g;
            });
        } else {
            SrnnGrads sg = srnn_backward(model.srnn, tr, dh);
            auto add = [&](const Tensor& t) {
                for (std::size_t i = 0; i < t.size(); ++i) res.grads[g][i] += t[i];
                ++g;
            };
            add(sg.w_xh);
            add(sg.w_hh);
            if (sg.has_bias) add(sg.b);
        }

        if (batch.initial_h)
            (*batch.initial_h)[s].assign(tr.h(T), tr.h(T) + n);
        if (batch.initial_c && model.is_lstm())
            (*batch.initial_c)[s].assign(tr.c(T), tr.c(T) + n);
    }

    res.data_loss /= static_cast<double>(count);
    res.penalty /= static_cast<double>(count);
    res.total = res.data_loss + res.penalty;
    if (!std::isfinite(res.total)) res.nan_event = true;
    return res;
}

// ---------------------------------------------------------------------------
// Training loop with rollback, early stopping, and summaries
// ---------------------------------------------------------------------------

struct SeedResult {
    std::uint64_t seed = 0;
    double beta = 0.0;
    std::string cell;
    double dev_metric = std::numeric_limits<double>::quiet_NaN();
    double test_metric = std::numeric_limits<double>::quiet_NaN();
    int epochs = 0;
    int rollbacks = 0;
    bool failed = false;
    std::string checkpoint_path;
};

struct ExperimentResult {
    std::vector<SeedResult> per_seed;
    std::string summary_path;
};

namespace detail {

inline std::vector<std::size_t> shuffled_order(std::size_t count,
                                               std::uint64_t seed,
                                               std::uint64_t epoch) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::derive(seed, 0x500 + epoch);
    for (std::size_t i = count; i > 1; --i)
        std::swap(order[i - 1], order[rng.next_index(i)]);
    return order;
}

inline Tensor one_hot_inputs(const int* ids, std::size_t T, std::size_t vocab) {
    Tensor x({T, vocab});
    for (std::size_t t = 0; t < T; ++t)
        x.at(t, static_cast<std::size_t>(ids[t])) = 1.0;
    return x;
}

} // namespace detail

// Evaluation metric: mean MSE for the adding task, bits-per-character for
// the language model. Lower is better for both.
inline double eval_adding(Model& model, const std::vector<AddingExample>& set) {
    double acc = 0.0;
    std::vector<double> logits(1);
    for (const AddingExample& ex : set) {
        CellState st(model.hidden_size());
        Tensor x = ex.inputs();
        for (std::size_t t = 0; t < x.dim(0); ++t)
            model_step(model, st, x.data() + t * 2);
        model.readout(st.h.data(), logits.data());
        acc += mse_loss(logits[0], ex.target);
    }
    return acc / static_cast<double>(set.size());
}

inline double eval_char_bpc(Model& model, const std::vector<CharWindow>& windows,
                            std::size_t vocab) {
    double nats = 0.0;
    std::size_t symbols = 0;
    std::vector<double> logits(vocab);
    std::vector<double> x(vocab, 0.0);
    for (const CharWindow& w : windows) {
        CellState st(model.hidden_size());
        for (std::size_t t = 0; t < w.inputs.size(); ++t) {
            std::fill(x.begin(), x.end(), 0.0);
            x[static_cast<std::size_t>(w.inputs[t])] = 1.0;
            model_step(model, st, x.data());
            model.readout(st.h.data(), logits.data());
            nats += softmax_xent(logits.data(), vocab, w.targets[t]);
            ++symbols;
        }
    }
    return bits_per_character(nats, symbols);
}

// Trains one seed: epoch loop with per-mini-batch NaN checks, rollback to
// the previous epoch boundary, dev-based early stopping, and a dev-best
// checkpoint on disk.
inline SeedResult train_one_seed(const ExperimentConfig& cfg,
                                 std::uint64_t seed,
                                 const CharCorpus* corpus,
                                 std::ostream* progress = nullptr) {
    cfg.validate();
    const bool char_task = cfg.task == TaskKind::CharLm;
    if (char_task && !corpus)
        throw ParameterError("char_lm task requires a corpus");

    SeedResult result;
    result.seed = seed;
    result.beta = cfg.reg.beta;
    result.cell = cell_name(cfg.cell);

    const std::size_t vocab = char_task ? corpus->vocab_size() : 0;
    const std::size_t d = char_task ? vocab : 2;
    const std::size_t out = char_task ? vocab : 1;

    Rng init_rng = Rng::derive(seed, 1);
    Model model = Model::create(cfg.cell, d, cfg.hidden_size, out, init_rng,
                                cfg.init_lo, cfg.init_hi, cfg.forget_bias);
    std::vector<Tensor*> params = model.params();

    // task data
    std::vector<AddingExample> train_set, dev_set, test_set;
    std::vector<CharWindow> train_windows, dev_windows, test_windows;
    std::size_t num_train;
    if (char_task) {
        train_windows = char_windows(*corpus, CharCorpus::Split::Train, cfg.seq_len);
        dev_windows = char_windows(*corpus, CharCorpus::Split::Dev, cfg.seq_len);
        test_windows = char_windows(*corpus, CharCorpus::Split::Test, cfg.seq_len);
        num_train = train_windows.size();
    } else {
        Rng data_rng = Rng::derive(seed, 2);
        train_set = gen_adding(data_rng, cfg.seq_len, cfg.train_examples,
                               cfg.split_halves);
        dev_set = gen_adding(data_rng, cfg.seq_len, cfg.dev_examples,
                             cfg.split_halves);
        test_set = gen_adding(data_rng, cfg.seq_len, cfg.test_examples,
                              cfg.split_halves);
        num_train = train_set.size();
    }

    Optimizer opt(cfg.train, params);
    Rng noise_rng = Rng::derive(seed, 3);

    TrainerState state;
    state.learning_rate = cfg.train.learning_rate;
    state.epoch = 0;
    state.initial = take_snapshot(params, opt, 0, noise_rng.counter());
    state.prev_epoch = state.initial;
    state.has_prev_epoch = false;

    std::vector<double> dev_history;
    double best_dev = std::numeric_limits<double>::infinity();
    Checkpoint best_ck;
    bool have_best = false;

    std::filesystem::create_directories(cfg.out_dir);
    std::ostringstream ckname;
    ckname << cfg.out_dir << "/seed_" << seed << "_beta_" << cfg.reg.beta
           << ".ckpt";
    result.checkpoint_path = ckname.str();

    while (state.epoch < cfg.train.max_epochs) {
        const int epoch = state.epoch + 1;
        // data order is keyed to the epoch index, so a rollback that
        // replays an epoch sees the same order
        std::vector<std::size_t> order = detail::shuffled_order(
            num_train, seed, static_cast<std::uint64_t>(epoch));
        noise_rng = Rng::derive(seed, 0xE0000 + static_cast<std::uint64_t>(epoch));

        // Stateful char-LM: the corpus is cut into batch_size contiguous
        // lanes; batch k pairs window k of every lane and the final state
        // of one window seeds the next. Otherwise plain shuffled batches.
        const bool stateful = char_task && cfg.carry_state &&
                              num_train >= cfg.batch_size;
        std::vector<std::vector<std::size_t>> batch_indices;
        if (stateful) {
            const std::size_t perlane = num_train / cfg.batch_size;
            for (std::size_t k = 0; k < perlane; ++k) {
                std::vector<std::size_t> idxs;
                for (std::size_t lane = 0; lane < cfg.batch_size; ++lane)
                    idxs.push_back(lane * perlane + k);
                batch_indices.push_back(std::move(idxs));
            }
        } else {
            for (std::size_t start = 0; start < num_train;
                 start += cfg.batch_size) {
                const std::size_t end =
                    std::min(start + cfg.batch_size, num_train);
                batch_indices.emplace_back(order.begin() + start,
                                           order.begin() + end);
            }
        }
        std::vector<std::vector<double>> carry_h, carry_c;
        if (stateful) {
            carry_h.assign(cfg.batch_size,
                           std::vector<double>(cfg.hidden_size, 0.0));
            if (model.is_lstm())
                carry_c.assign(cfg.batch_size,
                               std::vector<double>(cfg.hidden_size, 0.0));
        }

        bool rolled_back = false;
        for (const std::vector<std::size_t>& idxs : batch_indices) {
            ModelBatch batch;
            batch.has_symbols = char_task;
            if (stateful && idxs.size() == cfg.batch_size) {
                batch.initial_h = &carry_h;
                if (model.is_lstm()) batch.initial_c = &carry_c;
            }
            for (const std::size_t idx : idxs) {
                if (char_task) {
                    const CharWindow& w = train_windows[idx];
                    batch.inputs.push_back(detail::one_hot_inputs(
                        w.inputs.data(), w.inputs.size(), vocab));
                    batch.targets.push_back(w.targets);
                } else {
                    const AddingExample& ex = train_set[idx];
                    batch.inputs.push_back(ex.inputs());
                    batch.scalar_targets.push_back(ex.target);
                }
            }

            LossResult loss = total_loss(model, batch, cfg.reg, &noise_rng, true);
            bool nan = loss.nan_event;
            if (!nan) {
                std::vector<Tensor*> gptrs;
                for (Tensor& g : loss.grads) gptrs.push_back(&g);
                ClipResult clip =
                    clip_gradients(gptrs, cfg.train.clip_threshold);
                nan = clip.nan_event;
                if (!nan) {
                    std::vector<const Tensor*> cg;
                    for (Tensor& g : loss.grads) cg.push_back(&g);
                    opt.step(params, cg, state.learning_rate);
                }
            }
            if (nan) {
                nan_rollback(state, params, opt);
                rolled_back = true;
                break;
            }
        }
        if (rolled_back) {
            if (state.learning_rate < 1e-12) {
                result.failed = true;
                break;
            }
            continue; // replay from the restored epoch
        }

        state.epoch = epoch;
        state.prev_epoch =
            take_snapshot(params, opt, epoch, noise_rng.counter());
        state.has_prev_epoch = true;

        const double dev = char_task
                               ? eval_char_bpc(model, dev_windows, vocab)
                               : eval_adding(model, dev_set);
        dev_history.push_back(dev);
        if (progress)
            *progress << "seed " << seed << " epoch " << epoch << " dev " << dev
                      << " lr " << state.learning_rate << " rollbacks "
                      << state.rollback_count << "\n"
                      << std::flush;
        if (dev < best_dev) { // strictly lower counts as improvement
            best_dev = dev;
            best_ck = model_to_checkpoint(model);
            best_ck.epoch = static_cast<std::uint32_t>(epoch);
            best_ck.learning_rate = state.learning_rate;
            best_ck.seed = seed;
            best_ck.rng_counter = noise_rng.counter();
            have_best = true;
        }
        if (early_stop(dev_history, cfg.train.patience)) break;
    }

    result.epochs = state.epoch;
    result.rollbacks = state.rollback_count;
    if (result.failed || !have_best) {
        result.failed = true;
        return result;
    }

    save_checkpoint(best_ck, result.checkpoint_path);
    load_model_params(model, best_ck);
    result.dev_metric = best_dev;
    result.test_metric = char_task ? eval_char_bpc(model, test_windows, vocab)
                                   : eval_adding(model, test_set);
    return result;
}

inline void write_summary_csv(const std::vector<SeedResult>& rows,
                              const std::string& path) {
    auto os = detail::open_csv(path);
    os << "seed,beta,cell,dev_metric,test_metric,epochs,rollbacks\n";
    for (const SeedResult& r : rows) {
        os << r.seed << "," << detail::csv_num(r.beta) << "," << r.cell << ","
           << detail::csv_num(r.dev_metric) << ","
           << detail::csv_num(r.test_metric) << "," << r.epochs << ","
           << r.rollbacks << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

// Per-seed out-of-horizon diagnostics written next to the summary.
inline void emit_horizon_reports(const ExperimentConfig& cfg,
                                 const CharCorpus* corpus,
                                 const std::vector<SeedResult>& rows) {
    if (cfg.eval_horizon == 0) return;
    for (const SeedResult& r : rows) {
        if (r.failed) continue;
        Checkpoint ck = load_checkpoint(r.checkpoint_path);
        const bool char_task = cfg.task == TaskKind::CharLm;
        const std::size_t vocab = char_task ? corpus->vocab_size() : 0;
        Rng dummy(0);
        Model model = Model::create(cfg.cell, char_task ? vocab : 2,
                                    cfg.hidden_size, char_task ? vocab : 1,
                                    dummy, cfg.init_lo, cfg.init_hi,
                                    cfg.forget_bias);
        load_model_params(model, ck);

        std::vector<EvalSequence> seqs;
        if (char_task) {
            auto [lo, hi] = corpus->split_range(CharCorpus::Split::Test);
            // a handful of staggered offsets into the test stream
            for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t need = cfg.eval_horizon + 1;
                if (hi - lo < need) break;
                const std::size_t off = lo + (k * 97) % (hi - lo - need + 1);
                std::vector<int> ids(corpus->ids.begin() + off,
                                     corpus->ids.begin() + off + need);
                seqs.push_back(
                    eval_sequence_from_ids(ids, vocab, cfg.eval_horizon));
            }
        } else {
            Rng rng = Rng::derive(r.seed, 4);
            for (const AddingExample& ex :
                 gen_adding(rng, cfg.eval_horizon, 8, cfg.split_halves))
                seqs.push_back(eval_sequence_from_adding(ex));
        }
        if (seqs.empty()) continue;
        NormTrajectoryReport rep =
            norm_trajectory(model, seqs, cfg.eval_horizon);
        std::ostringstream path;
        path << cfg.out_dir << "/norms_seed_" << r.seed << "_beta_"
             << cfg.reg.beta << ".csv";
        export_csv(rep, path.str());
    }
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::ostream* progress = nullptr) {
    cfg.validate();
    std::unique_ptr<CharCorpus> corpus;
    if (cfg.task == TaskKind::CharLm) {
        if (cfg.corpus_path.empty())
            throw ParameterError("char_lm task requires a corpus path");
        corpus = std::make_unique<CharCorpus>(
            CharCorpus::from_file(cfg.corpus_path));
    }
    ExperimentResult res;
    for (std::uint64_t seed : cfg.seeds)
        res.per_seed.push_back(train_one_seed(cfg, seed, corpus.get(), progress));
    std::filesystem::create_directories(cfg.out_dir);
    res.summary_path = cfg.out_dir + "/summary.csv";
    write_summary_csv(res.per_seed, res.summary_path);
    emit_horizon_reports(cfg, corpus.get(), res.per_seed);
    return res;
}

// Runs run_experiment per beta and emits one comparison table; rows keep
// the input beta ordering.
inline std::vector<ExperimentResult> sweep(const ExperimentConfig& base,
                                           const std::vector<double>& betas) {
    if (betas.empty()) throw ParameterError("sweep needs at least one beta");
    std::vector<ExperimentResult> results;
    std::vector<std::pair<double, SeedResult>> table;
    for (double beta : betas) {
        ExperimentConfig cfg = base;
        cfg.reg.beta = beta;
        std::ostringstream sub;
        sub << base.out_dir << "/beta_" << beta;
        cfg.out_dir = sub.str();
        ExperimentResult r = run_experiment(cfg);
        for (const SeedResult& sr : r.per_seed) table.emplace_back(beta, sr);
        results.push_back(std::move(r));
    }
    auto os = detail::open_csv(base.out_dir + "/sweep.csv");
    os << "beta,seed,cell,dev_metric,test_metric,epochs,rollbacks\n";
    for (const auto& [beta, r] : table) {
        os << detail::csv_num(beta) << "," << r.seed << "," << r.cell << ","
           << detail::csv_num(r.dev_metric) << ","
           << detail::csv_num(r.test_metric) << "," << r.epochs << ","
           << r.rollbacks << "\n";
    }
    return results;
}

} // namespace normstab
