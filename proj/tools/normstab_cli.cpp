// Experiment CLI: training, beta sweeps, and the stability diagnostics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "normstab/analysis.hpp"
#include "normstab/experiment.hpp"

using namespace normstab;

namespace {

struct CommonOpts {
    std::string config;
    std::string out_dir;
    std::string corpus;
    std::string cell;
    double beta = -1.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "config file (key = value sections)");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--corpus", o.corpus, "corpus file for char_lm");
    cmd->add_option("--cell", o.cell,
                    "cell: srnn_tanh|srnn_relu|srnn_trec|irnn|lstm|lstm_no_output_tanh");
    cmd->add_option("--beta", o.beta, "penalty weight");
    cmd->add_option("--seed", o.seed, "single seed override")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_flag("--verbose", o.verbose, "per-epoch dev metric on stderr");
}

ExperimentConfig build_config(const CommonOpts& o) {
    ExperimentConfig cfg =
        o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (!o.corpus.empty()) cfg.corpus_path = o.corpus;
    if (!o.cell.empty()) cfg.cell = parse_cell(o.cell);
    if (o.beta >= 0.0) cfg.reg.beta = o.beta;
    if (o.seed_set) cfg.seeds = {o.seed};
    return cfg;
}

Model model_from_checkpoint(const ExperimentConfig& cfg,
                            const std::string& ckpt_path,
                            const CharCorpus* corpus) {
    const bool char_task = cfg.task == TaskKind::CharLm;
    const std::size_t vocab = char_task && corpus ? corpus->vocab_size() : 0;
    Rng rng(0);
    Model m = Model::create(cfg.cell, char_task ? vocab : 2, cfg.hidden_size,
                            char_task ? vocab : 1, rng, cfg.init_lo,
                            cfg.init_hi, cfg.forget_bias);
    load_model_params(m, load_checkpoint(ckpt_path));
    return m;
}

std::vector<EvalSequence> eval_sequences(const ExperimentConfig& cfg,
                                         const CharCorpus* corpus,
                                         std::size_t horizon,
                                         std::size_t count) {
    std::vector<EvalSequence> seqs;
    if (cfg.task == TaskKind::CharLm) {
        auto [lo, hi] = corpus->split_range(CharCorpus::Split::Test);
        const std::size_t need = horizon + 1;
        if (hi - lo < need)
            throw ParameterError("test split shorter than horizon + 1");
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t off = lo + (k * 97) % (hi - lo - need + 1);
            std::vector<int> ids(corpus->ids.begin() + off,
                                 corpus->ids.begin() + off + need);
            seqs.push_back(
                eval_sequence_from_ids(ids, corpus->vocab_size(), horizon));
        }
    } else {
        Rng rng = Rng::derive(cfg.seeds.front(), 4);
        for (const AddingExample& ex :
             gen_adding(rng, horizon, count, cfg.split_halves))
            seqs.push_back(eval_sequence_from_adding(ex));
    }
    return seqs;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"norm-stabilized recurrent network experiments"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string checkpoint_path;
    std::size_t horizon = 0;
    std::vector<double> sweep_betas;
    std::size_t eval_count = 4;

    auto* train_cmd = app.add_subcommand("train", "train per configured seeds");
    add_common(train_cmd, opts);

    auto* sweep_cmd = app.add_subcommand("sweep", "run a beta sweep");
    add_common(sweep_cmd, opts);
    sweep_cmd->add_option("--betas", sweep_betas, "beta values")->required();

    auto* horizon_cmd = app.add_subcommand(
        "eval-horizon", "norm/cost trajectory beyond the training horizon");
    add_common(horizon_cmd, opts);
    horizon_cmd->add_option("--checkpoint", checkpoint_path)->required();
    horizon_cmd->add_option("--horizon", horizon, "time-steps to evaluate");
    horizon_cmd->add_option("--sequences", eval_count, "evaluation sequences");

    auto* spectrum_cmd = app.add_subcommand(
        "spectrum", "eigenvalue moduli of the recurrent transition matrix");
    add_common(spectrum_cmd, opts);
    spectrum_cmd->add_option("--checkpoint", checkpoint_path)->required();

    auto* fg_cmd = app.add_subcommand("forget-gates",
                                      "sorted average LSTM forget gates");
    add_common(fg_cmd, opts);
    fg_cmd->add_option("--checkpoint", checkpoint_path)->required();
    fg_cmd->add_option("--sequences", eval_count, "evaluation sequences");

    auto* base_cmd = app.add_subcommand("adding-baselines",
                                        "reference costs for the adding task");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*base_cmd) {
            AddingBaselines b = adding_baselines();
            std::printf("short_sighted,%.12g\n", b.short_sighted);
            std::printf("constant_predictor,%.12g\n", b.constant_predictor);
            return 0;
        }

        ExperimentConfig cfg = build_config(opts);
        std::unique_ptr<CharCorpus> corpus;
        if (cfg.task == TaskKind::CharLm && !cfg.corpus_path.empty()) {
            corpus = std::make_unique<CharCorpus>(
                CharCorpus::from_file(cfg.corpus_path));
            std::filesystem::create_directories(cfg.out_dir);
            corpus->write_vocab(cfg.out_dir + "/vocab.txt");
        }

        std::ostream* progress = opts.verbose ? &std::cerr : nullptr;
        if (*train_cmd) {
            ExperimentResult res = run_experiment(cfg, progress);
            std::printf("summary: %s\n", res.summary_path.c_str());
            for (const SeedResult& r : res.per_seed)
                std::printf("seed %llu: dev=%.6g test=%.6g epochs=%d rollbacks=%d%s\n",
                            static_cast<unsigned long long>(r.seed),
                            r.dev_metric, r.test_metric, r.epochs, r.rollbacks,
                            r.failed ? " FAILED" : "");
        } else if (*sweep_cmd) {
            sweep(cfg, sweep_betas);
            std::printf("table: %s/sweep.csv\n", cfg.out_dir.c_str());
        } else if (*horizon_cmd) {
            if (horizon == 0) horizon = cfg.eval_horizon;
            if (horizon == 0)
                throw ParameterError("--horizon or eval_horizon required");
            Model m = model_from_checkpoint(cfg, checkpoint_path, corpus.get());
            NormTrajectoryReport rep = norm_trajectory(
                m, eval_sequences(cfg, corpus.get(), horizon, eval_count),
                horizon);
            const std::string out = cfg.out_dir + "/norms.csv";
            export_csv(rep, out);
            std::printf("report: %s\n", out.c_str());
        } else if (*spectrum_cmd) {
            Model m = model_from_checkpoint(cfg, checkpoint_path, corpus.get());
            SpectrumReport rep = eig_moduli(transition_matrix(m));
            const std::string out = cfg.out_dir + "/spectrum.csv";
            export_csv(rep, out);
            std::printf("report: %s (trace %.6g vs eig sum %.6g)\n", out.c_str(),
                        rep.trace, rep.eig_sum_real);
        } else if (*fg_cmd) {
            Model m = model_from_checkpoint(cfg, checkpoint_path, corpus.get());
            const std::size_t hor = cfg.seq_len;
            ForgetGateReport rep = forget_gate_stats(
                m, eval_sequences(cfg, corpus.get(), hor, eval_count));
            const std::string out = cfg.out_dir + "/forget_gates.csv";
            export_csv(rep, out);
            std::printf("report: %s\n", out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
