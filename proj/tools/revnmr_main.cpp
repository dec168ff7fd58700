// Command-line front end: dataset encoding and synthesis, training,
// prediction, inversion, metric evaluation and gradient checking. Every
// command is a pure function of (input files, flags, seed) and echoes its
// resolved configuration so runs can be reproduced exactly.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "revnmr/chem.hpp"
#include "revnmr/dataset.hpp"
#include "revnmr/eval.hpp"
#include "revnmr/gradcheck.hpp"
#include "revnmr/net.hpp"
#include "revnmr/train.hpp"

namespace {

using namespace revnmr;

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void echo_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string line = "config command=" + command;
    for (const auto& [k, v] : kv) line += " " + k + "=" + v;
    std::cout << line << "\n";
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

[[noreturn]] void input_error(const std::string& file, int line_no, const std::string& msg) {
    throw std::invalid_argument(file + ":" + std::to_string(line_no) + ": " + msg);
}

// bonds file line: <id>;<i>-<j>-<order>[-a];...
std::pair<int64_t, BondList> parse_bonds_line(const std::string& line, const std::string& file, int line_no) {
    const std::vector<std::string> fields = split_on(line, ';');
    if (fields.empty() || fields[0].empty()) input_error(file, line_no, "missing molecule id");
    int64_t id = 0;
    try {
        id = std::stoll(fields[0]);
    } catch (...) {
        input_error(file, line_no, "molecule id '" + fields[0] + "' is not an integer");
    }
    BondList mol;
    int max_index = -1;
    for (size_t f = 1; f < fields.size(); ++f) {
        if (fields[f].empty()) continue;
        const std::vector<std::string> parts = split_on(fields[f], '-');
        if (parts.size() != 3 && parts.size() != 4)
            input_error(file, line_no, "bond tuple '" + fields[f] + "' must be i-j-order or i-j-order-a");
        Bond b;
        try {
            b.i = std::stoi(parts[0]);
            b.j = std::stoi(parts[1]);
            b.order = std::stoi(parts[2]);
        } catch (...) {
            input_error(file, line_no, "bond tuple '" + fields[f] + "' has non-integer fields");
        }
        if (parts.size() == 4) {
            if (parts[3] != "a")
                input_error(file, line_no, "bond tuple '" + fields[f] + "': expected 'a' suffix, got '" +
                                               parts[3] + "'");
            b.aromatic = true;
        }
        if (b.order < 1 || b.order > 3)
            input_error(file, line_no, "bond tuple '" + fields[f] + "': order " + std::to_string(b.order) +
                                           " outside {1,2,3}");
        if (b.i == b.j) input_error(file, line_no, "bond tuple '" + fields[f] + "': self-bond");
        if (b.i > b.j) std::swap(b.i, b.j);
        if (b.i < 0 || b.j >= kMaxAtoms)
            input_error(file, line_no,
                        "bond tuple '" + fields[f] + "': atom index outside 0.." + std::to_string(kMaxAtoms - 1));
        mol.bonds.push_back(b);
        max_index = std::max(max_index, b.j);
    }
    mol.atom_count = max_index + 1;
    try {
        validate(mol);
    } catch (const std::exception& e) {
        input_error(file, line_no, e.what());
    }
    return {id, mol};
}

// peaks file line: <id>;<shift>,<shift>,...
std::pair<int64_t, PeakList> parse_peaks_line(const std::string& line, const std::string& file, int line_no) {
    const std::vector<std::string> fields = split_on(line, ';');
    if (fields.size() != 2) input_error(file, line_no, "expected <id>;<comma-separated shifts>");
    int64_t id = 0;
    try {
        id = std::stoll(fields[0]);
    } catch (...) {
        input_error(file, line_no, "molecule id '" + fields[0] + "' is not an integer");
    }
    PeakList peaks;
    if (!fields[1].empty()) {
        for (const std::string& tok : split_on(fields[1], ',')) {
            try {
                size_t pos = 0;
                peaks.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (...) {
                input_error(file, line_no, "shift '" + tok + "' is not a number");
            }
        }
    }
    return {id, peaks};
}

struct DataFlags {
    std::string path;
    bool header = false;
    bool code_cells = false;

    DatasetRows read() const {
        CsvOptions opts;
        opts.skip_header = header;
        opts.code_cells = code_cells;
        return read_dataset_file(path, opts);
    }
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
    cmd->add_option("--data", flags.path, "dataset in reversibledata.csv format")->required();
    cmd->add_flag("--header", flags.header, "skip a header line");
    cmd->add_flag("--code-cells", flags.code_cells, "bond code split over 136 cells instead of one string");
}

void add_weight_flags(CLI::App* cmd, LossWeights& w) {
    cmd->add_option("--w-y", w.w_y, "weight of the spectrum-code BCE term");
    cmd->add_option("--w-range", w.w_range, "weight of the out-of-range penalty");
    cmd->add_option("--w-sparse", w.w_sparse, "weight of the sparsity penalty");
    cmd->add_option("--w-forbidden", w.w_forbidden, "weight of the forbidden-region penalty");
    cmd->add_option("--w-zfree", w.w_zfree, "weight of the Z_free moment regularizer");
    cmd->add_option("--bce-pos-weight", w.bce_pos_weight, "positive-class weight in the BCE term");
}

int cmd_encode(const std::string& bonds_path, const std::string& peaks_path, const std::string& out_path) {
    echo_config("encode", {{"bonds", bonds_path}, {"peaks", peaks_path}, {"out", out_path}});

    std::ifstream peaks_in(peaks_path);
    if (!peaks_in) throw std::runtime_error("cannot open peaks file: " + peaks_path);
    std::map<int64_t, PeakList> peaks_by_id;
    std::string line;
    int line_no = 0;
    while (std::getline(peaks_in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto [id, peaks] = parse_peaks_line(line, peaks_path, line_no);
        peaks_by_id[id] = std::move(peaks);
    }

    std::ifstream bonds_in(bonds_path);
    if (!bonds_in) throw std::runtime_error("cannot open bonds file: " + bonds_path);
    DatasetRows rows;
    line_no = 0;
    while (std::getline(bonds_in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto [id, mol] = parse_bonds_line(line, bonds_path, line_no);
        auto it = peaks_by_id.find(id);
        if (it == peaks_by_id.end())
            input_error(bonds_path, line_no, "no peaks for molecule id " + std::to_string(id));
        if (it->second.empty())
            input_error(peaks_path, line_no, "empty peak list for molecule id " + std::to_string(id));
        DatasetRow row;
        row.molecule_id = id;
        row.spectrum_id = id;
        row.bond_code = bonds_to_code(mol);
        row.bins = bin_peaks(it->second);
        rows.push_back(std::move(row));
    }
    write_dataset_file(out_path, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_synth(int n, uint64_t seed, const std::string& out_path) {
    echo_config("synth", {{"n", std::to_string(n)}, {"seed", std::to_string(seed)}, {"out", out_path}});
    const DatasetRows rows = synth_dataset(n, seed);
    write_dataset_file(out_path, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_train(const DataFlags& data, const TrainConfig& cfg, const std::string& ckpt_path,
              const std::string& log_path) {
    echo_config("train", {{"data", data.path},
                          {"epochs", std::to_string(cfg.epochs)},
                          {"batch_size", std::to_string(cfg.batch_size)},
                          {"lr", fmt_g(cfg.learning_rate)},
                          {"split", fmt_g(cfg.split_fraction)},
                          {"seed", std::to_string(cfg.seed)},
                          {"w_y", fmt_g(cfg.weights.w_y)},
                          {"w_range", fmt_g(cfg.weights.w_range)},
                          {"w_sparse", fmt_g(cfg.weights.w_sparse)},
                          {"w_forbidden", fmt_g(cfg.weights.w_forbidden)},
                          {"w_zfree", fmt_g(cfg.weights.w_zfree)},
                          {"bce_pos_weight", fmt_g(cfg.weights.bce_pos_weight)},
                          {"out", ckpt_path},
                          {"log", log_path}});
    const DatasetRows rows = data.read();
    Net net;
    const FitResult result = fit(rows, cfg, net);
    std::cout << epoch_log_csv(result.logs);
    if (!log_path.empty()) atomic_write_file(log_path, epoch_log_csv(result.logs));
    save_checkpoint(net, ckpt_path);
    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason
                  << " (checkpoint holds the last completed epoch)\n";
        return 3;
    }
    std::cout << "wrote checkpoint " << ckpt_path << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const DataFlags& data, int report_k,
                const std::string& out_path) {
    echo_config("predict", {{"checkpoint", ckpt_path},
                            {"data", data.path},
                            {"report", std::to_string(report_k)},
                            {"out", out_path}});
    const DatasetRows rows = data.read();
    Net net;
    load_checkpoint(net, ckpt_path);

    std::string csv = "molecule_id,spectrum_id,code\n";
    for (const DatasetRow& row : rows) {
        const Tensor<float> y = split_latent(net.forward_value(bonds_to_channels<float>(code_to_bonds(row.bond_code)))).y_latent;
        SpectrumCode pred;
        for (int i = 0; i < kCodeBits; ++i)
            if (1.0 / (1.0 + std::exp(-static_cast<double>(y[i]))) > 0.5) pred.set(static_cast<size_t>(i));
        csv += std::to_string(row.molecule_id) + "," + std::to_string(row.spectrum_id) + "," +
               code_to_string(pred) + "\n";
    }
    if (!out_path.empty()) atomic_write_file(out_path, csv);
    else std::cout << csv;

    if (report_k > 0)
        std::cout << code_report(net, rows, std::min<int>(report_k, static_cast<int>(rows.size())));
    return 0;
}

int cmd_invert(const std::string& ckpt_path, const std::string& code_str, int samples, uint64_t seed,
               const std::string& out_path) {
    echo_config("invert", {{"checkpoint", ckpt_path},
                           {"code", code_str},
                           {"samples", std::to_string(samples)},
                           {"seed", std::to_string(seed)},
                           {"out", out_path}});
    if (samples < 1) throw std::invalid_argument("--samples must be >= 1");
    const SpectrumCode code = code_from_string(code_str);
    Net net;
    load_checkpoint(net, ckpt_path);

    const Tensor<float> y = code_to_tensor<float>(code);
    RngStream rng(seed);
    nlohmann::json out;
    out["code"] = code_str;
    out["seed"] = seed;
    out["samples"] = samples;
    out["candidates"] = nlohmann::json::array();
    for (int s = 0; s < samples; ++s) {
        RngStream draw = rng.substream(static_cast<uint64_t>(s));
        Tensor<float> z(Shape{kZFreeDim});
        draw.fill_normal(z);
        const Tensor<float> xhat = net.inverse_value(merge_latent(y, z));
        const BondList decoded = channels_to_bonds(xhat);

        nlohmann::json cand;
        cand["atom_count"] = decoded.atom_count;
        cand["bonds"] = nlohmann::json::array();
        for (const Bond& b : decoded.bonds)
            cand["bonds"].push_back({{"i", b.i}, {"j", b.j}, {"order", b.order}, {"aromatic", b.aromatic}});
        nlohmann::json channels = nlohmann::json::array();
        for (int c = 0; c < kBondChannels; ++c) {
            nlohmann::json plane = nlohmann::json::array();
            for (int r = 0; r < kGrid; ++r) {
                nlohmann::json rowv = nlohmann::json::array();
                for (int col = 0; col < kGrid; ++col) rowv.push_back(xhat.at(c, r, col));
                plane.push_back(std::move(rowv));
            }
            channels.push_back(std::move(plane));
        }
        cand["channels"] = std::move(channels);
        out["candidates"].push_back(std::move(cand));
    }
    const std::string text = out.dump(2) + "\n";
    if (!out_path.empty()) atomic_write_file(out_path, text);
    else std::cout << text;
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const DataFlags& data, uint64_t seed, PerturbationConfig pcfg,
             double val_split, uint64_t split_seed, bool split_given, const std::string& out_path,
             const std::string& csv_path) {
    echo_config("eval", {{"checkpoint", ckpt_path},
                         {"data", data.path},
                         {"seed", std::to_string(seed)},
                         {"eps", fmt_g(pcfg.epsilon)},
                         {"noise_draws", std::to_string(pcfg.n_noise)},
                         {"prior_draws", std::to_string(pcfg.n_prior)},
                         {"split", split_given ? fmt_g(val_split) : "none"},
                         {"split_seed", std::to_string(split_seed)},
                         {"out", out_path},
                         {"csv", csv_path}});
    DatasetRows rows = data.read();
    if (split_given)
        rows = split_dataset(rows, val_split, derive_seed(split_seed, kTagSplit)).second;
    Net net;
    load_checkpoint(net, ckpt_path);
    pcfg.seed = seed;
    const MetricReport report = compute_metrics(net, rows, pcfg);
    const std::string text = metric_report_text(report);
    std::cout << text;
    if (!out_path.empty()) atomic_write_file(out_path, text);
    if (!csv_path.empty()) atomic_write_file(csv_path, metric_report_csv(report));
    return 0;
}

int cmd_perturb(const std::string& ckpt_path, const DataFlags& data, uint64_t seed,
                const std::string& sweep_str, int n_noise, int n_prior, const std::string& out_path) {
    echo_config("perturb", {{"checkpoint", ckpt_path},
                            {"data", data.path},
                            {"seed", std::to_string(seed)},
                            {"eps_sweep", sweep_str},
                            {"noise_draws", std::to_string(n_noise)},
                            {"prior_draws", std::to_string(n_prior)},
                            {"out", out_path}});
    std::vector<double> sweep;
    for (const std::string& tok : split_on(sweep_str, ','))
        if (!tok.empty()) sweep.push_back(std::stod(tok));
    if (sweep.empty()) throw std::invalid_argument("--eps-sweep: no sweep points given");

    const DatasetRows rows = data.read();
    Net net;
    load_checkpoint(net, ckpt_path);

    std::string csv = "eps,cd_local,cd_prior,rcd_local,rcd_prior\n";
    for (double eps : sweep) {
        PerturbationConfig cfg;
        cfg.epsilon = eps;
        cfg.n_noise = n_noise;
        cfg.n_prior = n_prior;
        cfg.seed = RngStream::mix(seed, 0xCD10);
        const double cl = cd_local(net, rows, cfg);
        cfg.seed = RngStream::mix(seed, 0xCD20);
        const double cp = cd_prior(net, rows, cfg);
        csv += fmt_g(eps) + "," + fmt_g(cl) + "," + fmt_g(cp) + "," + fmt_g(rcd(cl, net, rows)) + "," +
               fmt_g(rcd(cp, net, rows)) + "\n";
    }
    std::cout << csv;
    if (!out_path.empty()) atomic_write_file(out_path, csv);
    return 0;
}

int cmd_gradcheck(uint64_t seed) {
    echo_config("gradcheck", {{"seed", std::to_string(seed)}});
    const std::vector<GradCheckResult> results = run_gradient_checks(seed);
    size_t width = 0;
    for (const GradCheckResult& r : results) width = std::max(width, r.component.size());
    bool all_ok = true;
    for (const GradCheckResult& r : results) {
        std::printf("%-*s  %.3e  %s\n", static_cast<int>(width), r.component.c_str(), r.worst_rel_error,
                    r.ok ? "ok" : "FAIL");
        all_ok = all_ok && r.ok;
    }
    return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invertible network between molecular bond encodings and binned 13C NMR spectrum codes"};
    app.require_subcommand(1);

    // encode
    std::string bonds_path, peaks_path, encode_out;
    CLI::App* encode = app.add_subcommand("encode", "encode bond/peak text files into the dataset CSV");
    encode->add_option("--bonds", bonds_path, "bonds file: <id>;<i>-<j>-<order>[-a];...")->required();
    encode->add_option("--peaks", peaks_path, "peaks file: <id>;<shift>,<shift>,...")->required();
    encode->add_option("--out", encode_out, "output CSV path")->required();

    // synth
    int synth_n = 100;
    uint64_t synth_seed = 0;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic surrogate dataset");
    synth->add_option("--n", synth_n, "number of rows")->required();
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // train
    DataFlags train_data;
    TrainConfig tcfg;
    std::string train_ckpt, train_log;
    CLI::App* train = app.add_subcommand("train", "train the invertible model");
    add_data_flags(train, train_data);
    train->add_option("--epochs", tcfg.epochs, "training epochs (default 5)");
    train->add_option("--batch-size", tcfg.batch_size, "mini-batch size (default 32)");
    train->add_option("--lr", tcfg.learning_rate, "Adam learning rate (default 1e-3)");
    train->add_option("--split", tcfg.split_fraction, "train fraction of the split (default 0.8)");
    train->add_option("--seed", tcfg.seed, "run seed (split, init, shuffling, sampling)");
    add_weight_flags(train, tcfg.weights);
    train->add_option("--out", train_ckpt, "checkpoint output path")->required();
    train->add_option("--log", train_log, "epoch log CSV path");

    // predict
    std::string predict_ckpt, predict_out;
    DataFlags predict_data;
    int report_k = 0;
    CLI::App* predict = app.add_subcommand("predict", "predict spectrum codes for dataset rows");
    predict->add_option("--checkpoint", predict_ckpt, "model checkpoint")->required();
    add_data_flags(predict, predict_data);
    predict->add_option("--report", report_k, "also print a positions table for the first K rows");
    predict->add_option("--out", predict_out, "predicted-codes CSV path (stdout if omitted)");

    // invert
    std::string invert_ckpt, invert_code, invert_out;
    int invert_samples = 1;
    uint64_t invert_seed = 0;
    CLI::App* invert = app.add_subcommand("invert", "generate structure candidates for a spectrum code");
    invert->add_option("--checkpoint", invert_ckpt, "model checkpoint")->required();
    invert->add_option("--code", invert_code, "128-character spectrum code")->required();
    invert->add_option("--samples", invert_samples, "number of Z_free draws")->required();
    invert->add_option("--seed", invert_seed, "random seed");
    invert->add_option("--out", invert_out, "JSON output path (stdout if omitted)");

    // eval
    std::string eval_ckpt, eval_out, eval_csv;
    DataFlags eval_data;
    uint64_t eval_seed = 0, eval_split_seed = 0;
    double eval_eps = 0.1, eval_split = 0.8;
    int eval_noise = 8, eval_prior = 8;
    CLI::App* evalc = app.add_subcommand("eval", "compute the full metric report");
    evalc->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    add_data_flags(evalc, eval_data);
    evalc->add_option("--seed", eval_seed, "random seed for all Monte-Carlo draws");
    evalc->add_option("--eps", eval_eps, "perturbation scale (default 0.1)");
    evalc->add_option("--noise-draws", eval_noise, "noise draws per sample (default 8)");
    evalc->add_option("--prior-draws", eval_prior, "prior draws per sample (default 8)");
    CLI::Option* split_opt =
        evalc->add_option("--split", eval_split, "evaluate on the validation part of this split");
    evalc->add_option("--split-seed", eval_split_seed, "seed of the train/validation split to reproduce");
    evalc->add_option("--out", eval_out, "text report path");
    evalc->add_option("--csv", eval_csv, "CSV report path");

    // perturb
    std::string pert_ckpt, pert_sweep = "0,0.05,0.1,0.2", pert_out;
    DataFlags pert_data;
    uint64_t pert_seed = 0;
    int pert_noise = 8, pert_prior = 8;
    CLI::App* perturb = app.add_subcommand("perturb", "sweep the perturbation metrics over epsilon");
    perturb->add_option("--checkpoint", pert_ckpt, "model checkpoint")->required();
    add_data_flags(perturb, pert_data);
    perturb->add_option("--seed", pert_seed, "random seed");
    perturb->add_option("--eps-sweep", pert_sweep, "comma-separated epsilon values");
    perturb->add_option("--noise-draws", pert_noise, "noise draws per sample (default 8)");
    perturb->add_option("--prior-draws", pert_prior, "prior draws per sample (default 8)");
    perturb->add_option("--out", pert_out, "CSV output path");

    // gradcheck
    uint64_t gc_seed = 0;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every primitive");
    gradcheck->add_option("--seed", gc_seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*encode) return cmd_encode(bonds_path, peaks_path, encode_out);
        if (*synth) return cmd_synth(synth_n, synth_seed, synth_out);
        if (*train) return cmd_train(train_data, tcfg, train_ckpt, train_log);
        if (*predict) return cmd_predict(predict_ckpt, predict_data, report_k, predict_out);
        if (*invert) return cmd_invert(invert_ckpt, invert_code, invert_samples, invert_seed, invert_out);
        if (*evalc) {
            PerturbationConfig pcfg;
            pcfg.epsilon = eval_eps;
            pcfg.n_noise = eval_noise;
            pcfg.n_prior = eval_prior;
            return cmd_eval(eval_ckpt, eval_data, eval_seed, pcfg, eval_split, eval_split_seed,
                            split_opt->count() > 0, eval_out, eval_csv);
        }
        if (*perturb)
            return cmd_perturb(pert_ckpt, pert_data, pert_seed, pert_sweep, pert_noise, pert_prior, pert_out);
        if (*gradcheck) return cmd_gradcheck(gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
