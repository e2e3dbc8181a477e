// Command-line front end: teacher training, distillation, latent
// optimization runs, and the benchmark suite.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ditto/bench.hpp"
#include "ditto/distill.hpp"
#include "ditto/io.hpp"

namespace fs = std::filesystem;
using namespace ditto;

namespace {

Dataset make_data(int count, unsigned long seed) {
    return bench::synth_generate(bench::SynthDatasetSpec{count, seed});
}

controls::ControlTarget load_target(controls::Task task, const std::string& path) {
    controls::ControlTarget t;
    t.task = task;
    switch (task) {
        case controls::Task::Intensity: {
            Tensor v = io::load_intensity_csv(path, kFrames);
            t.intensity_curve = Tensor({1, kFrames});
            for (int i = 0; i < kFrames; ++i) t.intensity_curve[i] = v[i];
            break;
        }
        case controls::Task::Melody:
            t.melody = io::load_melody_csv(path, kFrames);
            break;
        case controls::Task::Structure:
            t.ss_matrix = io::load_matrix_csv(path);
            break;
        case controls::Task::Inpaint:
            t.masked = controls::make_inpaint_target(io::load_matrix_csv(path));
            break;
        case controls::Task::Outpaint:
            t.masked = controls::make_outpaint_target(io::load_matrix_csv(path));
            break;
        case controls::Task::Embed: {
            Tensor e = io::load_vector(path);
            double n2 = 0.0;
            for (std::size_t i = 0; i < e.size(); ++i) n2 += e[i] * e[i];
            if (n2 <= 0.0) throw std::runtime_error("embed target has zero norm");
            for (std::size_t i = 0; i < e.size(); ++i) e[i] /= std::sqrt(n2);
            t.embed = e;
            break;
        }
    }
    t.validate();
    return t;
}

std::vector<std::vector<double>> curve_rows(const std::vector<double>& curve) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < curve.size(); ++i)
        rows.push_back({static_cast<double>(i), curve[i]});
    return rows;
}

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& log_path, int data_count, unsigned long data_seed) {
    TeacherTrainConfig cfg;
    if (!config_path.empty()) {
        auto c = io::read_config(config_path);
        cfg.schedule = io::config_str(c, "schedule", cfg.schedule);
        cfg.t_max = io::config_int(c, "steps", cfg.t_max);
        cfg.hidden = io::config_int(c, "hidden", cfg.hidden);
        cfg.epochs = io::config_int(c, "epochs", cfg.epochs);
        cfg.batch = io::config_int(c, "batch", cfg.batch);
        cfg.lr = io::config_double(c, "lr", cfg.lr);
        cfg.seed = io::config_int(c, "seed", static_cast<int>(cfg.seed));
        data_count = io::config_int(c, "data_count", data_count);
        data_seed = io::config_int(c, "data_seed", static_cast<int>(data_seed));
    }
    auto res = diffusion::train_teacher(make_data(data_count, data_seed), cfg);
    res.model.save(out);
    if (!log_path.empty()) io::write_csv(log_path, "epoch,loss", curve_rows(res.loss_curve));
    std::cout << "teacher saved to " << out << " (final loss " << res.loss_curve.back() << ")\n";
    return 0;
}

int cmd_distill(const std::string& teacher_path, const std::string& method,
                const std::string& config_path, const std::string& out, int steps,
                unsigned long seed, const std::string& log_path, int data_count,
                unsigned long data_seed) {
    DistillConfig cfg;
    cfg.method = method == "cm" ? DistillMethod::CM : DistillMethod::CTM;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.log_path = log_path;
    if (!config_path.empty()) {
        auto c = io::read_config(config_path);
        cfg.steps = io::config_int(c, "steps", cfg.steps);
        cfg.batch = io::config_int(c, "batch", cfg.batch);
        cfg.ema_decay = io::config_double(c, "ema_decay", cfg.ema_decay);
        cfg.lr = io::config_double(c, "lr", cfg.lr);
        cfg.seed = io::config_int(c, "seed", static_cast<int>(cfg.seed));
        data_count = io::config_int(c, "data_count", data_count);
        data_seed = io::config_int(c, "data_seed", static_cast<int>(data_seed));
    }
    DenoiserModel teacher = DenoiserModel::load(teacher_path);
    auto res = distill::run(teacher, make_data(data_count, data_seed), cfg);
    res.student.save(out);
    std::cout << "student saved to " << out << " (final loss " << res.loss_curve.back() << ")\n";
    return 0;
}

int cmd_optimize(const std::string& model_path, const std::string& task_name,
                 const std::string& method, const std::string& target_path,
                 const std::string& out_dir, int m, int t, double gamma, int k,
                 unsigned long seed, double w, int tempo, int mood, bool adaptive) {
    DenoiserModel model = DenoiserModel::load(model_path);
    controls::Task task = controls::task_from_name(task_name);
    controls::ControlTarget target = load_target(task, target_path);
    controls::ToyEmbedder embedder;

    ItoConfig cfg;
    cfg.k = k;
    cfg.m = m;
    cfg.adaptive = adaptive;
    cfg.decode_steps = t;
    cfg.gamma = gamma;
    cfg.cfg_weight = w;
    cfg.cond = Condition{tempo, mood};
    cfg.seed = seed;

    ItoResult res;
    if (method == "ditto") {
        if (model.is_student()) throw std::runtime_error("method ditto requires a teacher model");
        res = ito::ditto_baseline(model, target, embedder, k, t, cfg);
    } else if (method == "ditto2-cm" || method == "ditto2-ctm") {
        if (!model.is_student())
            throw std::runtime_error("method " + method + " requires a distilled student model");
        res = ito::run_ditto2(model, target, embedder, cfg);
    } else {
        throw std::runtime_error("unknown method " + method);
    }

    fs::create_directories(out_dir);
    io::save_matrix_csv(out_dir + "/latent.csv", res.latent);
    io::save_matrix_csv(out_dir + "/decoded.csv", res.decoded);
    io::write_csv(out_dir + "/loss.csv", "iteration,loss", curve_rows(res.loss_trajectory));

    bench::RunRecord rec;
    rec.cell = task_name;
    rec.method = method;
    rec.m = adaptive ? 0 : m;
    rec.t = t;
    rec.k = k;
    rec.gamma = gamma;
    rec.w = w;
    rec.seed = seed;
    rec.control_metric = controls::control_metric(res.decoded, target, embedder);
    rec.frechet = 0.0;
    rec.note = "frechet_not_evaluated";
    rec.forward_calls = res.calls.teacher_forward;
    rec.backward_calls = res.calls.teacher_backward;
    rec.student_steps = res.calls.student_steps;
    rec.accounted_units = res.accounted_units;
    rec.wall_seconds = res.wall_seconds;
    io::append_csv_row(out_dir + "/records.csv", bench::RunRecord::csv_header(),
                       rec.csv_fields());

    std::cout << "control metric " << rec.control_metric << ", accounted units "
              << rec.accounted_units << ", wall " << rec.wall_seconds << " s\n";
    return 0;
}

std::vector<bench::SweepCell> parse_cells(const std::string& text) {
    std::vector<bench::SweepCell> cells;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        if (item.empty()) continue;
        std::istringstream f(item);
        bench::SweepCell c;
        std::string m, t, adaptive;
        if (!std::getline(f, c.name, ':') || !std::getline(f, c.method, ':') ||
            !std::getline(f, m, ':') || !std::getline(f, t, ':'))
            throw std::runtime_error("bad cell spec (want name:method:m:t[:adaptive]): " + item);
        c.m = std::stoi(m);
        c.t = std::stoi(t);
        c.adaptive = std::getline(f, adaptive, ':') && adaptive == "adaptive";
        cells.push_back(c);
    }
    return cells;
}

int cmd_sweep(const std::string& grid_path, const std::string& out_dir) {
    auto g = io::read_config(grid_path);
    bench::SweepConfig cfg;
    cfg.k = io::config_int(g, "k", cfg.k);
    cfg.gamma = io::config_double(g, "gamma", cfg.gamma);
    cfg.cfg_weight = io::config_double(g, "w", cfg.cfg_weight);
    cfg.seed = io::config_int(g, "seed", static_cast<int>(cfg.seed));
    cfg.fad_samples = io::config_int(g, "fad_samples", cfg.fad_samples);
    cfg.timing_reps = io::config_int(g, "timing_reps", cfg.timing_reps);
    cfg.workers = io::config_int(g, "workers", cfg.workers);
    std::string cells = io::config_str(g, "cells", "default");
    cfg.cells = cells == "default" ? bench::default_cells() : parse_cells(cells);

    DenoiserModel teacher = DenoiserModel::load(io::config_str(g, "teacher", "teacher.ckpt"));
    DenoiserModel cm = DenoiserModel::load(io::config_str(g, "cm", "cm.ckpt"));
    DenoiserModel ctm = DenoiserModel::load(io::config_str(g, "ctm", "ctm.ckpt"));

    const int ref_count = io::config_int(g, "reference_count", 2000);
    const unsigned long ref_seed = io::config_int(g, "reference_seed", 99);
    controls::ToyEmbedder embedder;
    bench::GaussianFit ref = bench::reference_fit(make_data(ref_count, ref_seed), embedder);

    fs::create_directories(out_dir);
    auto recs = bench::sweep(cfg, teacher, cm, ctm, ref, embedder, out_dir);
    for (const auto& r : recs)
        std::cout << r.cell << ": " << (r.ok ? "ok" : "FAILED " + r.note)
                  << (r.ok ? " units=" + std::to_string(r.accounted_units) +
                                 " frechet=" + std::to_string(r.frechet)
                           : "")
                  << '\n';
    return 0;
}

std::vector<Tensor> load_dir(const std::string& dir) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv" && e.path().filename() != "labels.csv")
            paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<Tensor> out;
    for (const auto& p : paths) out.push_back(io::load_matrix_csv(p.string()));
    return out;
}

int cmd_fad(const std::string& samples_dir, const std::string& reference_dir) {
    controls::ToyEmbedder embedder;
    std::vector<Tensor> ref = load_dir(reference_dir);
    Dataset ref_data;
    for (auto& r : ref) ref_data.push_back({std::move(r), Condition::null()});
    bench::GaussianFit fit = bench::reference_fit(ref_data, embedder);
    double d = bench::eval_quality(load_dir(samples_dir), fit, embedder);
    std::cout << "frechet " << d << '\n';
    return 0;
}

int cmd_data(const std::string& spec_path, const std::string& out_dir) {
    auto s = io::read_config(spec_path);
    bench::SynthDatasetSpec spec;
    spec.count = io::config_int(s, "count", 100);
    spec.seed = io::config_int(s, "seed", 0);
    fs::create_directories(out_dir);
    std::vector<std::string> rows;
    std::ofstream labels(out_dir + "/labels.csv");
    labels << "index,tempo,mood\n";
    for (int i = 0; i < spec.count; ++i) {
        LabeledSample sample = bench::synth_sample(spec, i);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d.csv", i);
        io::save_matrix_csv(out_dir + "/" + name, sample.spec);
        labels << i << ',' << sample.cond.tempo << ',' << sample.cond.mood << '\n';
    }
    std::cout << spec.count << " samples written to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy diffusion distillation + inference-time optimization"};
    app.require_subcommand(1);

    // train
    std::string config, out = "teacher.ckpt", log;
    int data_count = 512;
    unsigned long data_seed = 11;
    auto* train = app.add_subcommand("train", "train the diffusion teacher");
    train->add_option("--config", config, "key=value config file");
    train->add_option("--out", out, "checkpoint path");
    train->add_option("--log", log, "loss-curve CSV path");
    train->add_option("--data-count", data_count);
    train->add_option("--data-seed", data_seed);

    // distill
    std::string d_teacher = "teacher.ckpt", d_method = "ctm", d_config, d_out = "student.ckpt",
                d_log;
    int d_steps = 2000, d_data_count = 512;
    unsigned long d_seed = 7, d_data_seed = 11;
    auto* dist = app.add_subcommand("distill", "distill a consistency student");
    dist->add_option("--teacher", d_teacher)->required();
    dist->add_option("--method", d_method)->check(CLI::IsMember({"cm", "ctm"}));
    dist->add_option("--config", d_config);
    dist->add_option("--out", d_out);
    dist->add_option("--steps", d_steps);
    dist->add_option("--seed", d_seed);
    dist->add_option("--log", d_log);
    dist->add_option("--data-count", d_data_count);
    dist->add_option("--data-seed", d_data_seed);

    // optimize
    std::string o_model, o_task = "intensity", o_method = "ditto2-ctm", o_target, o_out = "run";
    int o_m = 1, o_t = 2, o_k = 40, o_tempo = -1, o_mood = -1;
    double o_gamma = 0.2, o_w = 3.0;
    unsigned long o_seed = 0;
    bool o_adaptive = false;
    auto* opt = app.add_subcommand("optimize", "inference-time optimization run");
    opt->add_option("--model", o_model, "model checkpoint")->required();
    opt->add_option("--task", o_task)
        ->check(CLI::IsMember({"intensity", "melody", "structure", "inpaint", "outpaint",
                               "embed"}));
    opt->add_option("--method", o_method)
        ->check(CLI::IsMember({"ditto", "ditto2-cm", "ditto2-ctm"}));
    opt->add_option("--steps-opt", o_m, "surrogate steps M");
    opt->add_option("--steps-decode", o_t, "decode steps T");
    opt->add_option("--gamma", o_gamma);
    opt->add_option("--k", o_k, "optimizer iterations");
    opt->add_option("--seed", o_seed);
    opt->add_option("--w", o_w, "guidance weight");
    opt->add_option("--tempo", o_tempo, "tempo tag (-1 = null)");
    opt->add_option("--mood", o_mood, "mood tag (-1 = null)");
    opt->add_flag("--adaptive", o_adaptive, "coarse-to-fine M schedule");
    opt->add_option("--target", o_target, "target file")->required();
    opt->add_option("--out", o_out, "output directory");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "benchmark suite");
    bench_cmd->require_subcommand(1);
    std::string b_grid, b_out = "sweep", b_samples, b_reference, b_spec, b_data_out = "data";
    auto* sweep_cmd = bench_cmd->add_subcommand("sweep", "speed/quality sweep");
    sweep_cmd->add_option("--grid", b_grid, "grid config file")->required();
    sweep_cmd->add_option("--out", b_out, "output directory");
    auto* fad_cmd = bench_cmd->add_subcommand("fad", "Frechet distance between sample dirs");
    fad_cmd->add_option("--samples", b_samples)->required();
    fad_cmd->add_option("--reference", b_reference)->required();
    auto* data_cmd = bench_cmd->add_subcommand("data", "generate a synthetic dataset");
    data_cmd->add_option("--spec", b_spec)->required();
    data_cmd->add_option("--out", b_data_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config, out, log, data_count, data_seed);
        if (*dist)
            return cmd_distill(d_teacher, d_method, d_config, d_out, d_steps, d_seed, d_log,
                               d_data_count, d_data_seed);
        if (*opt)
            return cmd_optimize(o_model, o_task, o_method, o_target, o_out, o_m, o_t, o_gamma,
                                o_k, o_seed, o_w, o_tempo, o_mood, o_adaptive);
        if (*sweep_cmd) return cmd_sweep(b_grid, b_out);
        if (*fad_cmd) return cmd_fad(b_samples, b_reference);
        if (*data_cmd) return cmd_data(b_spec, b_data_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
