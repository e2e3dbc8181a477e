#include "ditto/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ditto/io.hpp"
#include "ditto/linalg.hpp"

namespace ditto::bench {

LabeledSample synth_sample(const SynthDatasetSpec& spec, int index) {
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + 0x100000001b3ULL * (index + 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Condition c;
    c.tempo = static_cast<int>(rng() % kTempoClasses);
    c.mood = static_cast<int>(rng() % kMoodClasses);

    const int period = kTempoPeriods[c.tempo];
    const double phase = unif(rng) * 2.0 * M_PI;
    const double amp = 1.2 + 0.6 * unif(rng);

    bool active[kBins] = {};
    for (int b : kMoodBins[c.mood]) active[b] = true;

    Tensor x({kBins, kFrames});
    for (int f = 0; f < kFrames; ++f) {
        const double env = 0.5 * (1.0 + std::sin(2.0 * M_PI * f / period + phase));
        for (int b = 0; b < kBins; ++b) {
            double v = 0.02 + 0.01 * unif(rng);
            if (active[b]) v += amp * (0.15 + 0.85 * env) * (0.95 + 0.1 * unif(rng));
            x.at(b, f) = std::min(v, 2.0);
        }
    }
    return {std::move(x), c};
}

Dataset synth_generate(const SynthDatasetSpec& spec) {
    if (spec.count < 0) throw std::invalid_argument("synth_generate: negative count");
    Dataset data;
    data.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) data.push_back(synth_sample(spec, i));
    return data;
}

GaussianFit fit_gaussian(const Tensor& features) {
    const int n = features.rows(), d = features.cols();
    if (n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
    GaussianFit fit{Tensor({d, 1}), Tensor({d, d})};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) fit.mean[j] += features.at(i, j);
    for (int j = 0; j < d; ++j) fit.mean[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            const double da = features.at(i, a) - fit.mean[a];
            for (int b = a; b < d; ++b)
                fit.cov.at(a, b) += da * (features.at(i, b) - fit.mean[b]);
        }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) fit.cov.at(b, a) = fit.cov.at(a, b) /= n;
    return fit;
}

std::vector<double> jacobi_eigh(const Tensor& sym, Tensor& vecs, double tol) {
    const int n = sym.rows();
    if (sym.cols() != n) throw std::invalid_argument("jacobi_eigh: matrix not square");
    Tensor a = sym;
    vecs = Tensor({n, n});
    for (int i = 0; i < n; ++i) vecs.at(i, i) = 1.0;

    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(a.at(i, i)));
    scale = std::max(scale, 1.0);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(a.at(p, q)));
        if (off <= tol * scale) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0), sn = t * cs;
                for (int i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = cs * aip - sn * aiq;
                    a.at(i, q) = sn * aip + cs * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = cs * api - sn * aqi;
                    a.at(q, i) = sn * api + cs * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vecs.at(i, p), viq = vecs.at(i, q);
                    vecs.at(i, p) = cs * vip - sn * viq;
                    vecs.at(i, q) = sn * vip + cs * viq;
                }
            }
    }
    std::vector<double> eig(n);
    for (int i = 0; i < n; ++i) eig[i] = a.at(i, i);
    return eig;
}

namespace {

Tensor sym_sqrt(const Tensor& s) {
    Tensor v;
    std::vector<double> eig = jacobi_eigh(s, v);
    const int n = s.rows();
    Tensor scaled({n, n});
    for (int j = 0; j < n; ++j) {
        const double r = std::sqrt(std::max(eig[j], 0.0));
        for (int i = 0; i < n; ++i) scaled.at(i, j) = v.at(i, j) * r;
    }
    return linalg::matmul_nt(scaled, v);
}

double trace(const Tensor& m) {
    double t = 0.0;
    for (int i = 0; i < m.rows(); ++i) t += m.at(i, i);
    return t;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Tensor intensity_curve_of(const Tensor& spec) {
    ad::Tape tape;
    return tape.value(controls::intensity_feature(tape, tape.leaf(spec, false)));
}

}  // namespace

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    const int d = a.mean.rows();
    if (b.mean.rows() != d || a.cov.rows() != d || b.cov.rows() != d)
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    double mu2 = 0.0;
    for (int i = 0; i < d; ++i) {
        const double dm = a.mean[i] - b.mean[i];
        mu2 += dm * dm;
    }
    Tensor ra = sym_sqrt(a.cov);
    Tensor inner = linalg::matmul_nn(ra, linalg::matmul_nn(b.cov, ra));
    // Round off asymmetry before the second root.
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            inner.at(i, j) = inner.at(j, i) = 0.5 * (inner.at(i, j) + inner.at(j, i));
    const double val = mu2 + trace(a.cov) + trace(b.cov) - 2.0 * trace(sym_sqrt(inner));
    return std::max(val, 0.0);
}

double eval_quality(const std::vector<Tensor>& samples, const GaussianFit& reference,
                    const controls::ToyEmbedder& embedder) {
    const int n = static_cast<int>(samples.size());
    if (n < 10 * controls::ToyEmbedder::kEmbedDim)
        throw std::invalid_argument("eval_quality: need at least " +
                                    std::to_string(10 * controls::ToyEmbedder::kEmbedDim) +
                                    " samples, got " + std::to_string(n));
    Tensor feats({n, controls::ToyEmbedder::kEmbedDim});
    for (int i = 0; i < n; ++i) {
        Tensor e = embedder.embed_value(samples[i]);
        for (int j = 0; j < controls::ToyEmbedder::kEmbedDim; ++j) feats.at(i, j) = e[j];
    }
    return frechet_distance(fit_gaussian(feats), reference);
}

GaussianFit reference_fit(const Dataset& data, const controls::ToyEmbedder& embedder) {
    const int n = static_cast<int>(data.size());
    Tensor feats({n, controls::ToyEmbedder::kEmbedDim});
    for (int i = 0; i < n; ++i) {
        Tensor e = embedder.embed_value(data[i].spec);
        for (int j = 0; j < controls::ToyEmbedder::kEmbedDim; ++j) feats.at(i, j) = e[j];
    }
    return fit_gaussian(feats);
}

std::string RunRecord::csv_header() {
    return "schema_version,cell,method,m,t,k,gamma,w,seed,control_metric,frechet,"
           "forward_calls,backward_calls,student_steps,accounted_units,wall_seconds,ok,note";
}

std::vector<std::string> RunRecord::csv_fields() const {
    std::ostringstream g, wv, cm, fd, ws;
    g.precision(17), wv.precision(17), cm.precision(17), fd.precision(17), ws.precision(17);
    g << gamma, wv << w, cm << control_metric, fd << frechet, ws << wall_seconds;
    return {"1",         cell,
            method,      std::to_string(m),
            std::to_string(t), std::to_string(k),
            g.str(),     wv.str(),
            std::to_string(seed), cm.str(),
            fd.str(),    std::to_string(forward_calls),
            std::to_string(backward_calls), std::to_string(student_steps),
            std::to_string(accounted_units), ws.str(),
            ok ? "1" : "0", note};
}

std::vector<SweepCell> default_cells() {
    return {{"dm-20-20", "ditto", 20, 20, false},   {"cm-1-1", "ditto2-cm", 1, 1, false},
            {"ctm-1-1", "ditto2-ctm", 1, 1, false}, {"ctm-1-2", "ditto2-ctm", 1, 2, false},
            {"ctm-1-4", "ditto2-ctm", 1, 4, false}, {"ctm-2-2", "ditto2-ctm", 2, 2, false},
            {"ctm-adaptive-4", "ditto2-ctm", 0, 4, true}};
}

namespace {

RunRecord run_cell(const SweepCell& cell, const SweepConfig& cfg, const DenoiserModel& teacher,
                   const DenoiserModel& cm_student, const DenoiserModel& ctm_student,
                   const GaussianFit& reference, const controls::ToyEmbedder& embedder,
                   const controls::ControlTarget& target) {
    RunRecord rec;
    rec.cell = cell.name;
    rec.method = cell.method;
    rec.m = cell.adaptive ? 0 : cell.m;
    rec.t = cell.t;
    rec.k = cfg.k;
    rec.gamma = cfg.gamma;
    rec.w = cfg.cfg_weight;
    rec.seed = cfg.seed;

    const bool baseline = cell.method == "ditto";
    const DenoiserModel* model =
        baseline ? &teacher : (cell.method == "ditto2-cm" ? &cm_student : &ctm_student);
    if (!baseline && cell.method != "ditto2-cm" && cell.method != "ditto2-ctm")
        throw std::invalid_argument("sweep: unknown method " + cell.method);

    ItoConfig icfg;
    icfg.k = cfg.k;
    icfg.m = cell.adaptive ? 1 : cell.m;
    icfg.adaptive = cell.adaptive;
    icfg.decode_steps = cell.t;
    icfg.gamma = cfg.gamma;
    icfg.cfg_weight = cfg.cfg_weight;
    icfg.seed = cfg.seed;

    ItoResult res;
    std::vector<double> walls;
    for (int rep = 0; rep < std::max(cfg.timing_reps, 1); ++rep) {
        ItoResult r = baseline ? ito::ditto_baseline(teacher, target, embedder, cfg.k, cell.t, icfg)
                               : ito::run_ditto2(*model, target, embedder, icfg);
        walls.push_back(r.wall_seconds);
        if (rep == 0) res = std::move(r);
    }
    rec.control_metric = controls::control_metric(res.decoded, target, embedder);
    rec.forward_calls = res.calls.teacher_forward;
    rec.backward_calls = res.calls.teacher_backward;
    rec.student_steps = res.calls.student_steps;
    rec.accounted_units = res.accounted_units;
    rec.wall_seconds = median(walls);

    // Quality: decode-only samples under the cell's sampler, random
    // latents and conditions matching the data distribution.
    std::mt19937_64 rng(cfg.seed + 0xabcdefULL);
    std::vector<Tensor> samples;
    samples.reserve(cfg.fad_samples);
    for (int i = 0; i < cfg.fad_samples; ++i) {
        Tensor x_T = Tensor::randn({1, kDataDim}, rng);
        Condition c{static_cast<int>(rng() % kTempoClasses),
                    static_cast<int>(rng() % kMoodClasses)};
        Tensor x0;
        if (baseline) {
            x0 = diffusion::sample_chain(
                teacher, x_T, c, SamplerConfig::even(teacher.schedule(), cell.t, cfg.cfg_weight));
        } else {
            x0 = ito::gamma_decode(*model, x_T, c, cfg.cfg_weight, cell.t, cfg.gamma, rng, nullptr);
        }
        Tensor grid({kBins, kFrames});
        std::copy(x0.data(), x0.data() + kDataDim, grid.data());
        samples.push_back(std::move(grid));
    }
    rec.frechet = eval_quality(samples, reference, embedder);
    return rec;
}

void write_svg(const std::string& path, const std::vector<RunRecord>& recs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("sweep: cannot write " + path);
    double xmax = 1.0, ymax = 1e-12;
    for (const auto& r : recs)
        if (r.ok) {
            xmax = std::max(xmax, static_cast<double>(r.accounted_units));
            ymax = std::max(ymax, r.frechet);
        }
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='480' height='360' "
           "viewBox='0 0 480 360'>\n"
           "<rect width='480' height='360' fill='white'/>\n"
           "<line x1='40' y1='320' x2='460' y2='320' stroke='black'/>\n"
           "<line x1='40' y1='320' x2='40' y2='20' stroke='black'/>\n"
           "<text x='200' y='350' font-size='12'>accounted units (log)</text>\n"
           "<text x='10' y='16' font-size='12'>Frechet</text>\n";
    for (const auto& r : recs) {
        if (!r.ok) continue;
        const double fx = std::log10(std::max(1.0, static_cast<double>(r.accounted_units))) /
                          std::log10(std::max(10.0, xmax));
        const double fy = r.frechet / ymax;
        const double px = 40 + fx * 420, py = 320 - fy * 300;
        out << "<circle cx='" << px << "' cy='" << py << "' r='4' fill='steelblue'/>\n"
            << "<text x='" << px + 6 << "' y='" << py + 4 << "' font-size='10'>" << r.cell
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace

std::vector<RunRecord> sweep(const SweepConfig& cfg, const DenoiserModel& teacher,
                             const DenoiserModel& cm_student, const DenoiserModel& ctm_student,
                             const GaussianFit& reference, const controls::ToyEmbedder& embedder,
                             const std::string& out_dir) {
    if (cfg.cells.empty()) throw std::invalid_argument("sweep: empty grid");

    // Shared achievable intensity target derived from a held-out sample.
    SynthDatasetSpec tspec{1, cfg.seed + 777};
    controls::ControlTarget target;
    target.task = controls::Task::Intensity;
    target.intensity_curve = intensity_curve_of(synth_sample(tspec, 0).spec);
    target.validate();

    std::vector<RunRecord> recs(cfg.cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cfg.cells.size();) {
            recs[i].cell = cfg.cells[i].name;
            recs[i].method = cfg.cells[i].method;
            try {
                recs[i] = run_cell(cfg.cells[i], cfg, teacher, cm_student, ctm_student, reference,
                                   embedder, target);
            } catch (const std::exception& e) {
                recs[i].ok = false;
                recs[i].note = e.what();
            }
        }
    };
    const int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    const std::string records_path = out_dir + "/records.csv";
    for (const auto& r : recs)
        io::append_csv_row(records_path, RunRecord::csv_header(), r.csv_fields());

    const RunRecord* base = nullptr;
    for (const auto& r : recs)
        if (r.ok && r.method == "ditto") {
            base = &r;
            break;
        }
    {
        std::ofstream out(out_dir + "/speedups.csv");
        out.precision(17);
        out << "cell,unit_speedup,wall_speedup\n";
        if (base)
            for (const auto& r : recs) {
                if (!r.ok) continue;
                out << r.cell << ','
                    << static_cast<double>(base->accounted_units) / r.accounted_units << ','
                    << base->wall_seconds / std::max(r.wall_seconds, 1e-12) << '\n';
            }
    }
    {
        std::vector<std::vector<double>> rows;
        for (const auto& r : recs)
            if (r.ok)
                rows.push_back({static_cast<double>(r.accounted_units), r.wall_seconds,
                                r.control_metric, r.frechet});
        io::write_csv(out_dir + "/plot_tradeoff.csv",
                      "accounted_units,wall_seconds,control_metric,frechet", rows);
    }
    write_svg(out_dir + "/plot_tradeoff.svg", recs);
    return recs;
}

}  // namespace ditto::bench
