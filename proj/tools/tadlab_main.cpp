// Command-line front end: every subcommand wraps one library operation with
// file I/O so runs compose through on-disk artifacts.

#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tadlab/core.hpp"
#include "tadlab/detectors.hpp"
#include "tadlab/eval.hpp"
#include "tadlab/io.hpp"
#include "tadlab/pipeline.hpp"
#include "tadlab/pretext.hpp"
#include "tadlab/synthesis.hpp"

namespace {

using namespace tadlab;

core::SplitBundle load_split(const std::string& path, std::size_t n) {
    const core::SplitBundle sb = core::SplitBundle::from_json(io::read_file(path));
    std::vector<char> seen(n, 0);
    const auto mark = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx) {
            if (i >= n || seen[i]) throw ValidationError("split does not partition the dataset");
            seen[i] = 1;
        }
    };
    mark(sb.train);
    mark(sb.val);
    mark(sb.test);
    if (sb.train.size() + sb.val.size() + sb.test.size() != n)
        throw ValidationError("split does not partition the dataset");
    return sb;
}

// Scores: "row_id,score" lines from the detect subcommand, or one bare score
// per line; the last comma-separated field wins, a non-numeric first line is
// treated as a header.
std::vector<double> read_scores(const std::string& path) {
    std::istringstream is(io::read_file(path));
    std::vector<double> out;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto pos = line.rfind(',');
        const std::string field = pos == std::string::npos ? line : line.substr(pos + 1);
        try {
            std::size_t used = 0;
            const double v = std::stod(field, &used);
            if (used != field.size()) throw ParseError("trailing characters");
            out.push_back(v);
        } catch (const std::exception&) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw ParseError("scores file: cannot parse line \"" + line + "\"");
        }
        first = false;
    }
    if (out.empty()) throw ParseError("scores file: no values in " + path);
    return out;
}

// Labels: a full dataset CSV (the "label" column is used) or a single 0/1
// column with an optional header line.
std::vector<int> read_labels(const std::string& path) {
    const std::string text = io::read_file(path);
    try {
        return core::parse_csv(text, "labels").y;
    } catch (const std::exception&) {
    }
    std::istringstream is(text);
    std::vector<int> out;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto pos = line.rfind(',');
        const std::string field = pos == std::string::npos ? line : line.substr(pos + 1);
        if (field == "0" || field == "1") {
            out.push_back(field == "1" ? 1 : 0);
        } else if (first) {
            // header
        } else {
            throw ParseError("labels file: expected 0/1, got \"" + line + "\"");
        }
        first = false;
    }
    if (out.empty()) throw ParseError("labels file: no values in " + path);
    return out;
}

core::Dataset embedding_dataset(const std::string& name, const Matrix& emb,
                                const std::vector<int>& y) {
    core::Dataset out;
    out.name = name;
    out.X = emb;
    out.y = y;
    out.source_path = "embed://" + name;
    out.source_checksum = io::fnv1a(emb.data.data(), emb.data.size() * sizeof(double));
    out.validate();
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabular anomaly-detection laboratory"};
    app.require_subcommand(1);
    int rc = 0;

    // --- ingest ------------------------------------------------------------
    std::string ing_in, ing_out, ing_name;
    auto* ingest = app.add_subcommand("ingest", "parse a CSV dataset and rewrite it normalized");
    ingest->add_option("--in", ing_in, "input CSV")->required();
    ingest->add_option("--out", ing_out, "output CSV")->required();
    ingest->add_option("--name", ing_name, "dataset name override");
    ingest->callback([&] {
        core::Dataset ds = core::load_dataset(ing_in);
        if (!ing_name.empty()) ds.name = ing_name;
        core::save_csv(ds, ing_out);
        std::cout << ds.name << ": n=" << ds.n() << " d=" << ds.d()
                  << " anomalies=" << ds.n_anomalies() << "\n";
    });

    // --- split ---------------------------------------------------------------
    std::string spl_in, spl_out;
    std::uint64_t spl_seed = 0;
    auto* split = app.add_subcommand("split", "one-class train/val/test split as index JSON");
    split->add_option("--in", spl_in, "input CSV")->required();
    split->add_option("--seed", spl_seed, "split seed")->required();
    split->add_option("--out", spl_out, "output JSON")->required();
    split->callback([&] {
        const core::Dataset ds = core::load_dataset(spl_in);
        const core::SplitBundle sb = core::one_class_split(ds, spl_seed);
        io::write_file(spl_out, sb.to_json());
        std::cout << "train=" << sb.train.size() << " val=" << sb.val.size()
                  << " test=" << sb.test.size() << "\n";
    });

    // --- toy -----------------------------------------------------------------
    synthesis::ToySpec toy_spec;
    std::string toy_out;
    auto* toy = app.add_subcommand("toy", "generate a two-dimensional toy dataset");
    toy->add_option("--name", toy_spec.name, "toy family")->required();
    toy->add_option("--seed", toy_spec.seed, "generation seed");
    toy->add_option("--n-normal", toy_spec.n_normal, "normal rows");
    toy->add_option("--n-anomaly", toy_spec.n_anomaly, "anomaly rows (0 = n_normal/20)");
    toy->add_option("--noise", toy_spec.noise, "jitter for curve-like families");
    toy->add_option("--out", toy_out, "output CSV")->required();
    toy->callback([&] {
        const core::Dataset ds = synthesis::make_toy(toy_spec);
        core::save_csv(ds, toy_out);
        std::cout << ds.name << ": n=" << ds.n() << " anomalies=" << ds.n_anomalies() << "\n";
    });

    // --- synth ---------------------------------------------------------------
    std::string syn_in, syn_out, syn_kind;
    std::size_t syn_n = 0;
    std::uint64_t syn_seed = 0;
    std::vector<std::size_t> syn_krange{1, 2, 3, 4, 5};
    synthesis::AnomalyParams syn_params;
    auto* synth = app.add_subcommand("synth", "synthesize anomalies from the normal rows");
    synth->add_option("--in", syn_in, "input CSV (GMM and statistics fit on its normal rows)")
        ->required();
    synth->add_option("--kind", syn_kind, "local|cluster|global|dependency")->required();
    synth->add_option("--n", syn_n, "rows to generate (0 = input anomaly count)");
    synth->add_option("--alpha", syn_params.alpha, "local covariance scale");
    synth->add_option("--beta", syn_params.beta, "cluster mean scale");
    synth->add_option("--delta", syn_params.delta, "global range scale");
    synth->add_option("--k-range", syn_krange, "GMM component counts to try");
    synth->add_option("--seed", syn_seed, "generation seed");
    synth->add_option("--out", syn_out, "output CSV of labeled anomalies")->required();
    synth->callback([&] {
        const core::Dataset ds = core::load_dataset(syn_in);
        const auto kind = synthesis::anomaly_kind_from_string(syn_kind);
        std::vector<std::size_t> normal_rows;
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (ds.y[i] == 0) normal_rows.push_back(i);
        const Matrix normals = ds.X.take_rows(normal_rows);
        std::size_t n = syn_n ? syn_n : ds.n_anomalies();
        if (n == 0) throw ValidationError("synth: input has no anomalies; pass --n");

        synthesis::Gmm gmm;
        using AK = synthesis::AnomalyKind;
        if (kind == AK::kLocal || kind == AK::kCluster) {
            std::vector<std::size_t> ks;
            for (std::size_t k : syn_krange)
                if (2 * k <= normals.rows) ks.push_back(k);
            if (ks.empty()) ks.push_back(1);
            gmm = synthesis::fit_gmm(normals, ks, syn_seed);
            syn_params.gmm = &gmm;
        }
        const Matrix a = synthesis::synthesize_anomalies(kind, normals, n, syn_params, syn_seed);
        core::Dataset out;
        out.name = ds.name + "_" + syn_kind;
        out.X = a;
        out.y.assign(a.rows, 1);
        out.source_path = "synth://" + syn_kind;
        out.source_checksum = io::fnv1a(a.data.data(), a.data.size() * sizeof(double));
        out.validate();
        core::save_csv(out, syn_out);
        std::cout << out.name << ": n=" << out.n() << "\n";
    });

    // --- corrupt ---------------------------------------------------------------
    std::string cor_in, cor_split, cor_kind, cor_out;
    double cor_prop = 0.1;
    std::uint64_t cor_seed = 0;
    auto* corrupt = app.add_subcommand("corrupt", "apply a feature-space corruption to a dataset");
    corrupt->add_option("--in", cor_in, "input CSV")->required();
    corrupt->add_option("--split", cor_split, "split JSON (corruptions are fit on train only)")
        ->required();
    corrupt
        ->add_option("--kind", cor_kind,
                     "add_uninformative|missing_values|remove_important|select_important")
        ->required();
    corrupt->add_option("--proportion", cor_prop, "corruption strength in (0, 1)")->required();
    corrupt->add_option("--seed", cor_seed, "corruption seed");
    corrupt->add_option("--out", cor_out, "output CSV, original row order")->required();
    corrupt->callback([&] {
        const core::Dataset ds = core::load_dataset(cor_in);
        const core::SplitBundle sb = load_split(cor_split, ds.n());
        const auto kind = synthesis::corruption_kind_from_string(cor_kind);

        synthesis::DataSplits splits{ds.X.take_rows(sb.train), ds.X.take_rows(sb.val),
                                     ds.X.take_rows(sb.test)};
        using CK = synthesis::CorruptionKind;
        synthesis::ImportanceRanking ranking;
        const bool needs_ranking =
            kind == CK::kRemoveImportant || kind == CK::kSelectImportant;
        if (needs_ranking)
            ranking = synthesis::forest_importance(ds.X, ds.y, {}, nn::mix_seed(cor_seed, 0xf0));
        const synthesis::DataSplits res = synthesis::corrupt(
            kind, splits, cor_prop, needs_ranking ? &ranking : nullptr, cor_seed);

        core::Dataset out;
        out.name = ds.name + "_" + cor_kind;
        out.X = Matrix(ds.n(), res.train.cols);
        out.y = ds.y;
        const auto place = [&](const std::vector<std::size_t>& idx, const Matrix& part) {
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < part.cols; ++j) out.X(idx[r], j) = part(r, j);
        };
        place(sb.train, res.train);
        place(sb.val, res.val);
        place(sb.test, res.test);
        out.source_path = "corrupt://" + cor_kind;
        out.source_checksum = io::fnv1a(out.X.data.data(), out.X.data.size() * sizeof(double));
        out.validate();
        core::save_csv(out, cor_out);
        std::cout << out.name << ": d=" << out.d() << "\n";
    });

    // --- train -----------------------------------------------------------------
    std::string tr_in, tr_split, tr_task, tr_loss, tr_out;
    pretext::TaskConfig tr_cfg;
    std::size_t tr_draws = 8, tr_epochs = 200, tr_patience = 10;
    std::uint64_t tr_seed = 0;
    auto* train = app.add_subcommand("train", "random-search a pretext encoder on train/val");
    train->add_option("--in", tr_in, "input CSV")->required();
    train->add_option("--split", tr_split, "split JSON")->required();
    train->add_option("--task", tr_task, "pretext kind")->required();
    train->add_option("--loss", tr_loss, "loss kind (default: first compatible)");
    train->add_option("--n-classes", tr_cfg.n_classes, "classes for classification kinds");
    train->add_option("--rate", tr_cfg.rate, "mask rate");
    train->add_option("--window", tr_cfg.window, "eicl window width (0 = auto)");
    train->add_option("--draws", tr_draws, "random-search draws");
    train->add_option("--epochs", tr_epochs, "epoch cap per draw");
    train->add_option("--patience", tr_patience, "early-stopping patience");
    train->add_option("--seed", tr_seed, "training seed");
    train->add_option("--out", tr_out, "artifact directory")->required();
    train->callback([&] {
        const core::Dataset ds = core::load_dataset(tr_in);
        const core::SplitBundle sb = load_split(tr_split, ds.n());
        const auto kind = pretext::pretext_kind_from_string(tr_task);
        const nn::LossKind loss = tr_loss.empty() ? pretext::compatible_losses(kind).front()
                                                  : nn::loss_kind_from_string(tr_loss);
        const Matrix train_x = ds.X.take_rows(sb.train);
        const Matrix val_x = ds.X.take_rows(sb.val);
        const pretext::PretextTask task = pretext::build_task(kind, ds.d(), tr_cfg, tr_seed);
        const pretext::SearchResult sr =
            pretext::random_search(task, loss, train_x, val_x, nn::mix_seed(tr_seed, 0x5ea2c4),
                                   tr_draws, tr_epochs, tr_patience);
        pretext::save_artifact(sr.best, tr_out);
        std::cout << "best draw " << sr.best_draw << ": val_loss=" << sr.best.best_val_loss()
                  << "\n";
    });

    // --- embed -----------------------------------------------------------------
    std::string emb_art, emb_in, emb_out;
    auto* embed = app.add_subcommand("embed", "embed a dataset with a trained encoder");
    embed->add_option("--artifact", emb_art, "artifact directory from train")->required();
    embed->add_option("--in", emb_in, "input CSV")->required();
    embed->add_option("--out", emb_out, "output CSV: embedding features, labels passed through")
        ->required();
    embed->callback([&] {
        const pretext::EncoderArtifact art = pretext::load_artifact(emb_art);
        const core::Dataset ds = core::load_dataset(emb_in);
        const Matrix emb = art.embed(ds.X);
        core::save_csv(embedding_dataset(ds.name + "_emb", emb, ds.y), emb_out);
        std::cout << ds.name << ": embedded to d=" << emb.cols << "\n";
    });

    // --- detect ------------------------------------------------------------------
    std::string det_kind, det_train, det_test, det_out, det_gamma = "scale";
    detectors::DetectorConfig det_cfg;
    auto* detect = app.add_subcommand("detect", "fit a detector on train, score test");
    detect->add_option("--kind", det_kind, "knn|lof|iforest|ocsvm|residual_norm")->required();
    detect->add_option("--train", det_train, "training CSV (labels ignored)")->required();
    detect->add_option("--test", det_test, "query CSV")->required();
    detect->add_option("--k", det_cfg.k, "neighbor count");
    detect->add_option("--n-trees", det_cfg.n_trees, "forest size");
    detect->add_option("--subsample", det_cfg.subsample, "forest subsample");
    detect->add_option("--nu", det_cfg.nu, "one-class nu");
    detect->add_option("--gamma", det_gamma, "RBF gamma, or \"scale\"");
    detect->add_option("--fraction", det_cfg.fraction, "residual subspace fraction");
    detect->add_option("--seed", det_cfg.seed, "forest seed");
    detect->add_option("--out", det_out, "output CSV (default: stdout)");
    detect->callback([&] {
        det_cfg.kind = detectors::kind_from_name(det_kind);
        det_cfg.gamma =
            det_gamma == "scale" ? detectors::kGammaScale : std::stod(det_gamma);
        const core::Dataset tr = core::load_dataset(det_train);
        const core::Dataset te = core::load_dataset(det_test);
        const detectors::DetectorModel model = detectors::fit(det_cfg, tr.X);
        const detectors::ScoreVector sv = detectors::score(model, te.X);
        const std::string csv = detectors::scores_to_csv(sv);
        if (det_out.empty())
            std::cout << csv;
        else
            io::write_file(det_out, csv);
    });

    // --- eval ------------------------------------------------------------------
    std::string ev_scores, ev_labels;
    auto* evalc = app.add_subcommand("eval", "AUROC of a score file against labels");
    evalc->add_option("--scores", ev_scores, "score CSV from detect")->required();
    evalc->add_option("--labels", ev_labels, "label CSV (dataset or single column)")->required();
    evalc->callback([&] {
        const auto scores = read_scores(ev_scores);
        const auto labels = read_labels(ev_labels);
        std::cout.precision(17);
        std::cout << eval::auroc(scores, labels) << "\n";
    });

    // --- report ----------------------------------------------------------------
    std::string rep_scores, rep_out;
    double rep_alpha = 0.05;
    auto* report = app.add_subcommand("report", "assemble a report from a score table CSV");
    report->add_option("--scores", rep_scores, "score table CSV (rows x methods)")->required();
    report->add_option("--alpha", rep_alpha, "rank-test significance level");
    report->add_option("--out", rep_out, "output JSON")->required();
    report->callback([&] {
        const eval::ScoreTable table = eval::ScoreTable::from_csv(io::read_file(rep_scores));
        eval::EvalReport rep;
        rep.table = table;
        rep.summaries = eval::summarize(table);
        if (table.methods.size() >= 3 && table.complete_rows().size() >= 5)
            rep.ranks = eval::rank_compare(table, rep_alpha);
        io::write_file(rep_out, rep.to_json());
        std::cout << "methods=" << table.methods.size() << " rows=" << table.row_labels.size()
                  << " complete=" << table.complete_rows().size() << "\n";
    });

    // --- run -------------------------------------------------------------------
    std::string run_manifest_path;
    pipeline::RunOptions run_opts;
    std::uint64_t run_seed = 0;
    auto* run = app.add_subcommand("run", "execute an experiment manifest");
    run->add_option("--manifest", run_manifest_path, "manifest JSON")->required();
    run->add_flag("--resume", run_opts.resume, "reuse cached encoders and embeddings");
    run->add_option("--workers", run_opts.workers, "parallel train/embed cells");
    run->add_option("--out", run_opts.out_dir, "output directory override");
    auto* seed_opt = run->add_option("--seed", run_seed, "seed override");
    run->callback([&] {
        run_opts.has_seed = seed_opt->count() > 0;
        run_opts.seed = run_seed;
        const pipeline::RunOutcome outcome =
            pipeline::run_manifest(run_manifest_path, run_opts);
        std::cout << "report: " << outcome.report_json_path << "\n"
                  << "scores: " << outcome.scores_csv_path << "\n"
                  << "encoders trained=" << outcome.encoders_trained
                  << " cache hits=" << outcome.cache_hits << "\n";
        if (!outcome.failures.empty()) {
            std::cerr << outcome.failures.size() << " failed cells:\n";
            for (const auto& f : outcome.failures) std::cerr << "  " << f << "\n";
            rc = 1;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
