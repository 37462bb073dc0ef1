#include "metrocusp/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "metrocusp/decomposition.hpp"
#include "metrocusp/kernel.hpp"
#include "metrocusp/spectral.hpp"
#include "metrocusp/torus.hpp"

namespace metrocusp {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << content;
}

// bounded worker pool over sweep indices; tasks must be independent
void parallel_for(int n, int workers, const std::function<void(int)>& task) {
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, n));
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    task(i);
                } catch (...) {
                    errors[static_cast<size_t>(i)] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct SweepRow {
    double h = 0, delta = 0, gap = 0, gap_err = 0, min_eig = 0, sup_m = 0;
    std::string json;
};

int run_gap_sweep(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    DensitySpec den = normalize(c.density(), dom);
    int n = static_cast<int>(c.h_values.size());
    std::vector<SweepRow> rows(static_cast<size_t>(n));
    bool richardson = c.tol("richardson", 1.0) > 0.5;
    parallel_for(n, c.workers, [&](int i) {
        double h = c.h_values[static_cast<size_t>(i)];
        double delta = h / c.grid_ratio;
        DiscretizedOperator op = assemble_operator(dom, den, h, delta);
        EigenOptions eo;
        eo.seed = c.seed;
        eo.tol = c.tol("eig", 1e-10);
        double gap = spectral_gap(op, eo);
        double gap_err = 0.0;
        if (richardson) {
            DiscretizedOperator op2 = assemble_operator(dom, den, h, delta / 2.0);
            gap_err = std::abs(gap - spectral_gap(op2, eo));
        }
        EigenResult bot = eigen_bottom(op, 1, eo);
        SpectralReport rep;
        rep.h = h;
        rep.grid_spacing = delta;
        rep.gap = gap;
        rep.gap_richardson_error = gap_err;
        rep.min_eigenvalue = bot.pairs.at(0).value;
        rep.sup_rejection = op.sup_rejection();
        rep.constant_used = diffusion_constant(dom.dim());
        rep.seed = c.seed;
        rep.tol = eo.tol;
        SweepRow& r = rows[static_cast<size_t>(i)];
        r.h = h;
        r.delta = delta;
        r.gap = gap;
        r.gap_err = gap_err;
        r.min_eig = rep.min_eigenvalue;
        r.sup_m = rep.sup_rejection;
        r.json = rep.to_json();
    });
    std::string csv = "h,delta,gap,gap_over_h2,min_eig,sup_m\n";
    for (int i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<size_t>(i)];
        csv += fmt(r.h) + "," + fmt(r.delta) + "," + fmt(r.gap) + "," +
               fmt(r.gap / (r.h * r.h)) + "," + fmt(r.min_eig) + "," + fmt(r.sup_m) + "\n";
        write_file(c.output_dir + "/gap_h" + std::to_string(i) + ".json", r.json);
        std::cout << "gap-sweep h=" << r.h << " gap/h^2=" << r.gap / (r.h * r.h)
                  << " (err " << r.gap_err << ")\n";
    }
    write_file(c.output_dir + "/gap_sweep.csv", csv);
    return 0;
}

int run_spectrum(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    DensitySpec den = normalize(c.density(), dom);
    double R = c.tol("R", 15.0);
    int modes = static_cast<int>(c.tol("modes", 8.0));
    for (size_t i = 0; i < c.h_values.size(); ++i) {
        double h = c.h_values[i];
        double delta = h / c.grid_ratio;
        DiscretizedOperator op = assemble_operator(dom, den, h, delta);
        EigenOptions eo;
        eo.seed = c.seed;
        auto clusters = rescaled_spectrum(op, R, 0.0, 0.0, eo);
        SpectralReport rep;
        rep.h = h;
        rep.grid_spacing = delta;
        rep.sup_rejection = op.sup_rejection();
        rep.constant_used = diffusion_constant(dom.dim());
        rep.seed = c.seed;
        int cid = 0;
        for (const auto& cl : clusters) {
            for (double v : cl.values) {
                rep.rescaled.push_back(v);
                rep.top_eigenvalues.push_back({1.0 - v * h * h, cid});
            }
            ++cid;
        }
        rep.gap = rep.rescaled.empty() ? 0.0 : rep.rescaled.front() * h * h;
        if (den.smoothness() == Smoothness::C1) {
            NeumannReference ref =
                neumann_reference(dom, den, modes, c.tol("ref_delta", 1.0 / 64));
            rep.reference_eigenvalues = ref.eigenvalues;
        }
        write_file(c.output_dir + "/spectrum_h" + std::to_string(i) + ".json", rep.to_json());
        std::cout << "spectrum h=" << h << " clusters=" << clusters.size() << "\n";
    }
    return 0;
}

int run_localization(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    DensitySpec den = normalize(c.density(), dom);
    std::vector<DiscretizedOperator> ops;
    for (double h : c.h_values)
        ops.push_back(assemble_operator(dom, den, h, h / c.grid_ratio));
    std::vector<const DiscretizedOperator*> ptrs;
    for (auto& o : ops) ptrs.push_back(&o);
    EigenOptions eo;
    eo.seed = c.seed;
    LocalizationCheck lc = spectrum_localization_check(ptrs, dom.gamma(), eo);
    nlohmann::ordered_json j;
    j["gamma"] = dom.gamma();
    j["h_values"] = lc.h_values;
    j["sup_rejection"] = lc.sup_rejection;
    j["min_eigenvalue"] = lc.min_eigenvalue;
    j["slope_one_minus_supm"] = lc.slope_one_minus_supm;
    j["min_edge_constant"] = lc.min_edge_constant;
    j["version"] = version_string();
    write_file(c.output_dir + "/localization.json", j.dump(2));
    std::string csv = "h,sup_m,min_eig\n";
    for (size_t i = 0; i < lc.h_values.size(); ++i)
        csv += fmt(lc.h_values[i]) + "," + fmt(lc.sup_rejection[i]) + "," +
               fmt(lc.min_eigenvalue[i]) + "\n";
    write_file(c.output_dir + "/localization.csv", csv);
    std::cout << "localization slope=" << lc.slope_one_minus_supm
              << " min_edge_constant=" << lc.min_edge_constant << "\n";
    return 0;
}

int run_tv(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    DensitySpec den = normalize(c.density(), dom);
    for (size_t i = 0; i < c.h_values.size(); ++i) {
        double h = c.h_values[i];
        DiscretizedOperator op = assemble_operator(dom, den, h, h / c.grid_ratio);
        EigenOptions eo;
        eo.seed = c.seed;
        double gap = spectral_gap(op, eo);
        long n_max = static_cast<long>(c.tol("n_max", 0.0));
        if (n_max <= 0) n_max = static_cast<long>(std::ceil(30.0 / gap));
        TVOptions to;
        to.seed = c.seed;
        TVReport rep = tv_decay(op, n_max, to);
        rep.gap = gap;
        write_file(c.output_dir + "/tv_h" + std::to_string(i) + ".json", tv_report_to_json(rep));
        std::string csv = "n,tv\n";
        for (size_t s = 0; s < rep.n_values.size(); ++s)
            csv += std::to_string(rep.n_values[s]) + "," + fmt(rep.tv_values[s]) + "\n";
        write_file(c.output_dir + "/tv_h" + std::to_string(i) + ".csv", csv);
        std::cout << "tv h=" << h << " rate=" << rep.fitted_rate << " gap=" << gap << "\n";
    }
    return 0;
}

int run_gn_table(const ExperimentConfig& c) {
    double xi_max = c.tol("xi_max", 4.0), xi_step = c.tol("xi_step", 0.01);
    std::string csv = "n,xi,value\n";
    for (int n = 1; n <= 3; ++n)
        for (double xi = 0.0; xi <= xi_max + 1e-12; xi += xi_step)
            csv += std::to_string(n) + "," + fmt(xi) + "," + fmt(ball_multiplier(n, xi)) + "\n";
    write_file(c.output_dir + "/gn_table.csv", csv);
    std::cout << "gn-table written\n";
    return 0;
}

int run_decompose(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    if (dom.charts().size() != 1) throw ConfigError("decompose: needs a single cusp chart");
    const CuspChart& ch = dom.charts().front();
    ModelCusp model(ch.alpha, ch.d_prime, ch.d_doubleprime);
    FieldEval f = [](const Point& p) { return std::cos(M_PI * p[0]); };
    for (size_t i = 0; i < c.h_values.size(); ++i) {
        DecompositionOptions opts;
        opts.seed = c.seed;
        opts.n1 = static_cast<int>(c.tol("n1", 64));
        opts.ntr = static_cast<int>(c.tol("ntr", 64));
        DecompositionReport rep = decompose_low_energy(model, f, c.h_values[i], opts);
        write_file(c.output_dir + "/decompose_h" + std::to_string(i) + ".json", rep.to_json());
        rep.per_level_csv(c.output_dir + "/decompose_h" + std::to_string(i) + ".csv");
        std::cout << "decompose h=" << c.h_values[i] << " |fH|=" << rep.norm_fH
                  << " |grad fL|=" << rep.norm_fL_grad << " collar=" << rep.collar_max_x1 << "\n";
    }
    return 0;
}

int run_glue(const ExperimentConfig& c) {
    int runs = static_cast<int>(c.tol("runs", 20.0));
    std::string csv = "h,runs,max_h1,max_l2_over_h,max_trace_residual,linearity_exact\n";
    auto arr = nlohmann::ordered_json::array();
    for (double h : c.h_values) {
        GlueSuiteResult r = glue_suite(h, runs, c.seed);
        csv += fmt(r.h) + "," + std::to_string(r.runs) + "," + fmt(r.max_h1) + "," +
               fmt(r.max_l2_over_h) + "," + fmt(r.max_trace_residual) + "," +
               (r.linearity_exact ? "1" : "0") + "\n";
        arr.push_back({{"h", r.h},
                       {"runs", r.runs},
                       {"max_h1", r.max_h1},
                       {"max_l2_over_h", r.max_l2_over_h},
                       {"max_trace_residual", r.max_trace_residual},
                       {"linearity_exact", r.linearity_exact}});
        std::cout << "glue h=" << h << " Upsilon=" << std::max(r.max_h1, r.max_l2_over_h) << "\n";
    }
    nlohmann::ordered_json j;
    j["suite"] = arr;
    j["version"] = version_string();
    write_file(c.output_dir + "/glue.json", j.dump(2));
    write_file(c.output_dir + "/glue.csv", csv);
    return 0;
}

int run_sample(const ExperimentConfig& c) {
    DomainSpec dom = c.domain();
    DensitySpec den = normalize(c.density(), dom);
    double h = c.h_values.front();
    DiscretizedOperator op = assemble_operator(dom, den, h, h / c.grid_ratio);
    EigenOptions eo;
    eo.seed = c.seed;
    double gap = spectral_gap(op, eo);
    long steps = static_cast<long>(c.tol("steps", 0.0));
    if (steps <= 0) steps = static_cast<long>(std::ceil(50.0 / gap));
    long chains = static_cast<long>(c.tol("chains", 10000.0));
    int bins = static_cast<int>(c.tol("bins", 20.0));

    AxisBox bb = dom.bounding_box();
    Point start;
    start.dim = dom.dim();
    for (int k = 0; k < dom.dim(); ++k)
        start[k] = 0.5 * (bb.lo[static_cast<size_t>(k)] + bb.hi[static_cast<size_t>(k)]);
    if (!dom.contains(start)) start = op.grid.centers[static_cast<size_t>(op.size() / 2)];

    // empirical final-state histogram over x1 bins vs the aggregated node measure
    std::vector<double> emp(static_cast<size_t>(bins), 0.0), sta(static_cast<size_t>(bins), 0.0);
    double lo = bb.lo[0], hi = bb.hi[0];
    std::vector<ChainStep> traj0;
    for (long ci = 0; ci < chains; ++ci) {
        Rng rng = Rng::stream(c.seed, static_cast<uint64_t>(ci));
        Point x = start;
        for (long s = 0; s < steps; ++s) {
            ChainStep st = chain_step(x, h, dom, den, rng);
            x = st.position;
            if (ci == 0 && s < 2000) traj0.push_back(st);
        }
        int b = std::min(bins - 1, std::max(0, static_cast<int>((x[0] - lo) / (hi - lo) * bins)));
        emp[static_cast<size_t>(b)] += 1.0 / chains;
    }
    double mu_total = 0.0;
    for (double m : op.mu) mu_total += m;
    for (int i = 0; i < op.size(); ++i) {
        int b = std::min(bins - 1, std::max(0, static_cast<int>((op.grid.centers[static_cast<size_t>(i)][0] - lo) /
                                                               (hi - lo) * bins)));
        sta[static_cast<size_t>(b)] += op.mu[static_cast<size_t>(i)] / mu_total;
    }
    double tv = 0.0;
    for (int b = 0; b < bins; ++b) tv += std::abs(emp[static_cast<size_t>(b)] - sta[static_cast<size_t>(b)]);
    tv *= 0.5;

    export_chain_csv(c.output_dir + "/chain0.csv", traj0);
    nlohmann::ordered_json j;
    j["h"] = h;
    j["gap"] = gap;
    j["steps"] = steps;
    j["chains"] = chains;
    j["bins"] = bins;
    j["tv_empirical_vs_stationary"] = tv;
    j["seed"] = c.seed;
    j["version"] = version_string();
    write_file(c.output_dir + "/sample.json", j.dump(2));
    std::cout << "sample tv=" << tv << " steps=" << steps << "\n";
    return 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& c) {
    try {
        c.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    try {
        fs::create_directories(c.output_dir);
        write_file(c.output_dir + "/config_resolved.txt",
                   c.serialize() + "version " + version_string() + "\n");
        if (c.kind == "gap-sweep") return run_gap_sweep(c);
        if (c.kind == "spectrum") return run_spectrum(c);
        if (c.kind == "localization") return run_localization(c);
        if (c.kind == "tv") return run_tv(c);
        if (c.kind == "gn-table") return run_gn_table(c);
        if (c.kind == "decompose") return run_decompose(c);
        if (c.kind == "sample") return run_sample(c);
        if (c.kind == "glue") {
            std::cerr << "glue: use the acceptance suite for the randomized gluing checks\n";
            return 2;
        }
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace metrocusp
