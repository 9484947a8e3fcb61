#include "heatlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <locale>
#include <sstream>
#include <thread>

#include "heatlab/boundary_inverse.hpp"
#include "heatlab/random.hpp"
#include "heatlab/semigroup.hpp"
#include "heatlab/unique_continuation.hpp"

namespace heatlab {

namespace {

using nlohmann::json;

// Seed streams for the experiment layer; members use split_seed(master, stream, i).
constexpr std::uint64_t kStreamField = 10;
constexpr std::uint64_t kStreamProbe = 11;
constexpr std::uint64_t kStreamPairs = 12;
constexpr std::uint64_t kStreamHarmonic = 13;

std::string number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << x;
  return os.str();
}

void parallel_for(Index n, int threads, const std::function<void(Index)>& body) {
  const int workers = static_cast<int>(std::clamp<Index>(threads, 1, std::max<Index>(n, 1)));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Context {
  const ExperimentConfig& config;
  std::filesystem::path out;
  int threads;
  Grid grid;
  Potential potential;
  std::uint64_t seed;
  RunResult& result;

  std::filesystem::path file(const std::string& name) {
    const auto p = out / name;
    result.artifacts.push_back(p);
    return p;
  }

  json envelope(const std::string& subcommand) const {
    json cfg = to_json(config);
    cfg.erase("output");
    return {{"subcommand", subcommand}, {"seed", seed}, {"config", cfg}};
  }

  void absorb(const AuditReport& r) {
    for (const std::string& a : r.anomalies) result.anomalies.push_back(r.id + ": " + a);
  }

  json reports(const std::vector<const AuditReport*>& rs) {
    json arr = json::array();
    for (const AuditReport* r : rs) {
      absorb(*r);
      arr.push_back(to_json(*r));
    }
    return arr;
  }

  TimeGrid time_grid() const { return TimeGrid::span(config.window.t_frak, config.ensemble.time_steps); }

  Point center() const {
    Point c{};
    for (int a = 0; a < grid.dim(); ++a) c[a] = 0.5 * (grid.axis(a).low + grid.axis(a).high);
    return c;
  }
};

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

void run_spectrum(Context& cx) {
  const auto k = cx.config.params.spectrum_modes;
  const EigenSystem eig = eigendecompose(cx.grid, cx.potential, k > 0 ? std::optional<Index>(k) : std::nullopt);
  std::vector<std::vector<double>> rows;
  PlotSeries lam{"lambda", {}, {}};
  for (Index i = 0; i < eig.modes(); ++i) {
    rows.push_back({static_cast<double>(i + 1), eig.lambdas[i]});
    lam.x.push_back(static_cast<double>(i + 1));
    lam.y.push_back(eig.lambdas[i]);
  }
  write_csv(cx.file("spectrum.csv"), {"k", "lambda"}, rows);

  json j = cx.envelope("spectrum");
  std::vector<PlotSeries> plot{lam};
  if (eig.modes() >= 10) {
    const WeylFit fit = weyl_fit(eig);
    const AuditReport weyl = weyl_audit(eig, fit);
    j["reports"] = cx.reports({&weyl});
    j["weyl"] = {{"c0", fit.c0}, {"c1", fit.c1}, {"exponent", fit.exponent}};
    PlotSeries lo{"weyl_lower", lam.x, {}};
    PlotSeries hi{"weyl_upper", lam.x, {}};
    for (Index i = 0; i < eig.modes(); ++i) {
      lo.y.push_back(fit.lower(i + 1));
      hi.y.push_back(fit.upper(i + 1));
    }
    plot.push_back(lo);
    plot.push_back(hi);
  } else {
    j["reports"] = json::array();
  }
  const double sigma = cx.config.sigma ? *cx.config.sigma : sobolev_constant(cx.grid).sigma;
  const AdmissibilityCertificate cert = check_admissible(cx.potential, cx.config.vartheta, sigma);
  j["admissibility"] = {{"sigma", cert.sigma},
                        {"vartheta", cert.vartheta},
                        {"potential_norm", cert.potential_norm},
                        {"product_check", cert.product_check},
                        {"certified", cert.certified}};
  j["clusters"] = eig.clusters.size();
  write_json(cx.file("spectrum.json"), j);
  write_plot_csv(cx.file("spectrum_plot.csv"), plot);
}

void run_semigroup(Context& cx) {
  const EigenSystem eig = eigendecompose(cx.grid, cx.potential);
  Rng rng(split_seed(cx.seed, kStreamField, 0));
  const Eigen::VectorXd f = rng.normal_vector(cx.grid.size());
  json j = cx.envelope("semigroup");
  j["reports"] = json::array();
  for (double t : cx.config.params.semigroup_times) {
    const SemigroupReports r = semigroup_property_report(eig, f, t, 0.5 * t);
    for (const json& x : cx.reports({&r.law, &r.growth, &r.derivative, &r.residual})) {
      json y = x;
      y["t1"] = t;
      y["t2"] = 0.5 * t;
      j["reports"].push_back(y);
    }
  }
  j["growth_constant"] = growth_constant(eig);
  write_json(cx.file("semigroup.json"), j);

  PlotSeries norm{"norm_T_t_f", {}, {}};
  const double t_end = cx.config.window.t_frak;
  for (int i = 0; i <= 60; ++i) {
    const double t = t_end * std::pow(10.0, -3.0 + 3.0 * i / 60.0);
    norm.x.push_back(t);
    norm.y.push_back(l2_norm(cx.grid, apply_semigroup(eig, t, f)));
  }
  write_plot_csv(cx.file("semigroup_plot.csv"), {norm});
}

std::vector<BoundaryInput> make_probes(Context& cx, const Mask& gamma0, const TimeGrid& tg) {
  std::vector<BoundaryInput> probes;
  for (int i = 0; i < cx.config.ensemble.probes; ++i) {
    probes.push_back(generate_probe(cx.grid, gamma0, cx.config.window, tg, ProbeShape::random_smooth,
                                    split_seed(cx.seed, kStreamProbe, static_cast<std::uint64_t>(i))));
  }
  return probes;
}

void run_forward(Context& cx) {
  const EigenSystem eig = eigendecompose(cx.grid, cx.potential);
  const TimeGrid tg = cx.time_grid();
  const Mask gamma0 = make_mask(cx.grid, cx.config.masks.gamma0);
  const Mask gamma1 = make_mask(cx.grid, cx.config.masks.gamma1);
  const auto probes = make_probes(cx, gamma0, tg);
  json j = cx.envelope("forward");
  j["reports"] = json::array();
  j["measurements"] = json::array();
  std::vector<PlotSeries> plot;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const SpaceTimeField u = solve_boundary_driven(eig, probes[p], tg);
    AuditReport r = residual_report(eig, u, nullptr, &probes[p]);
    json x = cx.reports({&r}).at(0);
    x["probe"] = p;
    j["reports"].push_back(x);
    const MeasurementRecord m =
        neumann_measurement(eig, probes[p], cx.config.window.t_star, gamma1, "probe" + std::to_string(p));
    j["measurements"].push_back(
        {{"probe", m.probe_id}, {"t_star", m.t_star}, {"norm", boundary_norm(m.data)}, {"values", vector_json(m.data.values)}});
    PlotSeries s{"probe" + std::to_string(p), {}, {}};
    for (Index i = 0; i < tg.knots(); i += std::max<Index>(1, tg.knots() / 100)) {
      s.x.push_back(tg.t(i));
      s.y.push_back(l2_norm(cx.grid, u.nodal(eig, i)));
    }
    plot.push_back(s);
  }
  write_json(cx.file("forward.json"), j);
  write_plot_csv(cx.file("forward_plot.csv"), plot);
}

void run_distinguish(Context& cx) {
  const auto* ball = std::get_if<region::Ball>(&cx.config.masks.omega0);
  if (ball == nullptr) throw config_error("distinguish needs masks.omega0 to be a ball");
  const TimeGrid tg = cx.time_grid();
  const Mask gamma0 = make_mask(cx.grid, cx.config.masks.gamma0);
  const Mask gamma1 = make_mask(cx.grid, cx.config.masks.gamma1);
  const auto probes = make_probes(cx, gamma0, tg);
  const auto& deltas = cx.config.params.distinguish_deltas;
  std::vector<EigenSystem> systems(deltas.size() + 1);
  parallel_for(static_cast<Index>(systems.size()), cx.threads, [&](Index i) {
    const Potential v = i == 0 ? cx.potential : add_ball(cx.potential, *ball, deltas[static_cast<std::size_t>(i - 1)]);
    systems[static_cast<std::size_t>(i)] = eigendecompose(cx.grid, v);
  });
  std::vector<EigenSystem> family(systems.begin() + 1, systems.end());
  family.insert(family.begin(), systems.front());
  AuditReport r = distinguishability_experiment(systems.front(), family, probes, cx.config.window, gamma0, gamma1);
  json j = cx.envelope("distinguish");
  j["reports"] = cx.reports({&r});
  j["deltas"] = deltas;
  write_json(cx.file("distinguish.json"), j);

  std::vector<std::vector<double>> rows;
  PlotSeries gap{"measurement_gap", {}, {}};
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const double d = i == 0 ? 0.0 : deltas[i - 1];
    const auto& m = r.samples[i].metadata;
    rows.push_back({d, m.at("measurement_gap"), m.at("spectral_gap"), m.at("fingerprint_gap")});
    gap.x.push_back(d);
    gap.y.push_back(m.at("measurement_gap"));
  }
  write_csv(cx.file("distinguish.csv"), {"delta", "measurement_gap", "spectral_gap", "fingerprint_gap"}, rows);
  write_plot_csv(cx.file("distinguish_plot.csv"), {gap});
}

void run_reconstruct(Context& cx) {
  const EigenSystem eig = eigendecompose(cx.grid, cx.potential);
  const Index modes = cx.config.ensemble.modes;
  const Eigen::VectorXd truth = low_mode_ensemble(eig, 1, modes, cx.seed).col(0);
  const Mask omega = make_mask(cx.grid, cx.config.masks.omega);
  std::vector<double> times;
  const int knots = cx.config.params.reconstruct_knots;
  for (int i = 1; i <= knots; ++i) times.push_back(cx.config.window.t_frak * i / knots);
  const Eigen::MatrixXd data = observation_data(eig, truth, omega, times);
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  const double cutoff = lt[modes - 1] * (1 + 1e-12);
  const Reconstruction rec = reconstruct_initial(eig, data, omega, times, cutoff, cx.config.params.reconstruct_tau,
                                                 cx.config.stability.beta, &truth);
  json j = cx.envelope("reconstruct");
  j["reconstruction"] = {{"rank", rec.rank},
                         {"kappa", json_number(rec.kappa)},
                         {"residual", json_number(rec.residual)},
                         {"error", json_number(rec.error.value_or(std::nan("")))},
                         {"truth_norm", l2_norm(cx.grid, truth)},
                         {"tail_bound", json_number(rec.tail_bound.value_or(std::nan("")))},
                         {"singular_values", vector_json(rec.singular_values)}};
  write_json(cx.file("reconstruct.json"), j);

  const Eigen::VectorXd a = eig.coefficients(truth);
  std::vector<std::vector<double>> rows;
  PlotSeries t{"truth", {}, {}};
  PlotSeries r{"recovered", {}, {}};
  for (std::size_t i = 0; i < rec.modes.size(); ++i) {
    const Index k = rec.modes[i];
    rows.push_back({static_cast<double>(k + 1), a[k], rec.coefficients[static_cast<Index>(i)]});
    t.x.push_back(static_cast<double>(k + 1));
    t.y.push_back(a[k]);
    r.x.push_back(static_cast<double>(k + 1));
    r.y.push_back(rec.coefficients[static_cast<Index>(i)]);
  }
  write_csv(cx.file("reconstruct.csv"), {"k", "truth", "recovered"}, rows);
  write_plot_csv(cx.file("reconstruct_plot.csv"), {t, r});
}

void run_observability(Context& cx) {
  const EigenSystem eig = eigendecompose(cx.grid, cx.potential);
  const StabilityFunctions fns(cx.config.stability_for(cx.grid));
  const Mask omega = make_mask(cx.grid, cx.config.masks.omega);
  const Eigen::MatrixXd ens = low_mode_ensemble(eig, cx.config.ensemble.samples, cx.config.ensemble.modes, cx.seed);
  const TimeGrid tg = cx.time_grid();
  const ObservabilityAudit obs = observability_audit(eig, ens, omega, tg, fns);
  const StabilityAudit st = stability_audit(eig, ens, omega, tg, cx.config.params.stability_lambdas, fns);
  const AuditReport tail = tail_bound_audit(eig, ens, cx.config.params.stability_lambdas, fns.config().beta);
  json j = cx.envelope("observability");
  j["reports"] = cx.reports({&obs.main, &obs.telescoping, &st.theorem, &st.corollary, &tail});
  j["c_star"] = json_number(obs.c_star);
  j["c_fit"] = json_number(st.c_fit);
  j["c_corollary"] = json_number(st.c_corollary);
  write_json(cx.file("observability.json"), j);

  const ObservabilityFunctional fn = observability_functional(eig, ens.col(0), omega, tg, fns);
  PlotSeries s{"I_f", fn.times, fn.values};
  PlotSeries o{"observed", fn.times, fn.observed};
  write_plot_csv(cx.file("observability_plot.csv"), {s, o});
}

void run_quc(Context& cx) {
  const ExperimentConfig& c = cx.config;
  const auto ens = harmonic_ensemble(cx.grid, cx.potential, c.ensemble.samples,
                                     split_seed(cx.seed, kStreamHarmonic, 0));
  std::vector<Eigen::VectorXd> fields;
  for (const auto& s : ens) fields.push_back(s.u.values);
  const Point x0 = cx.center();
  const double half = cx.grid.distance_to_boundary(x0);
  const Mask w0 = make_mask(cx.grid, region::Ball{x0, 0.3 * half});
  const Mask w1 = make_mask(cx.grid, region::Ball{x0, 0.7 * half});
  const double d = mask_distance(cx.grid, w0, w1);
  const AuditReport cacc = caccioppoli_check(ens, cx.potential, w0, w1, d);
  const ExponentSide side = parse_exponent_side(c.params.exponent_side);
  std::vector<AuditReport> balls;
  for (double r : c.params.three_ball_radii) balls.push_back(three_ball_check(cx.grid, fields, x0, r, c.stability.varsigma, side));
  const StabilityFunctions fns(c.stability_for(cx.grid));
  const Mask omega = make_mask(cx.grid, c.masks.omega);
  const AuditReport glob = global_quc_audit(cx.grid, fields, omega, c.params.quc_rhos, fns, c.stability.varsigma);

  std::vector<const AuditReport*> all{&cacc};
  for (const auto& b : balls) all.push_back(&b);
  all.push_back(&glob);
  json j = cx.envelope("quc");
  j["reports"] = cx.reports(all);
  j["exponent_side"] = to_string(side);
  if (balls.size() >= 2) {
    // Cross-radius ratio of fitted constants for the first two radii.
    std::size_t within = 0;
    const std::size_t n = std::min(balls[0].samples.size(), balls[1].samples.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double q = std::exp(balls[0].samples[i].log_fitted - balls[1].samples[i].log_fitted);
      if (q >= 0.25 && q <= 4) ++within;
    }
    j["three_ball_within_factor4"] = within;
    j["three_ball_compared"] = n;
  }
  write_json(cx.file("quc.json"), j);

  std::vector<PlotSeries> plot;
  for (std::size_t u = 0; u < std::min<std::size_t>(fields.size(), 5); ++u) {
    PlotSeries s{"u" + std::to_string(u) + "_log_rhs_loglog", {}, {}};
    for (const auto& smp : glob.samples) {
      if (smp.metadata.at("sample") != static_cast<double>(u)) continue;
      s.x.push_back(smp.metadata.at("rho"));
      s.y.push_back(smp.rhs_loglog);
    }
    plot.push_back(s);
  }
  write_plot_csv(cx.file("quc_plot.csv"), plot);
}

void run_chain(Context& cx) {
  const ExperimentConfig& c = cx.config;
  const HarmonicSample u = harmonic_sample(cx.grid, cx.potential, split_seed(cx.seed, kStreamHarmonic, 0));
  json j = cx.envelope("chain");
  j["chains"] = json::array();
  j["reports"] = json::array();
  std::vector<PlotSeries> plot;
  for (std::size_t di = 0; di < c.params.chain_deltas.size(); ++di) {
    const double delta = c.params.chain_deltas[di];
    std::vector<std::pair<Point, Point>> pairs;
    Rng rng(split_seed(cx.seed, kStreamPairs, di));
    for (int p = 0; p < c.params.chain_pairs; ++p) {
      Point x{}, y{};
      for (int a = 0; a < cx.grid.dim(); ++a) {
        const double lo = cx.grid.axis(a).low + 4 * delta;
        const double hi = cx.grid.axis(a).high - 4 * delta;
        x[a] = rng.uniform(lo, hi);
        y[a] = rng.uniform(lo, hi);
      }
      pairs.emplace_back(x, y);
    }
    std::vector<Chain> chains(pairs.size());
    std::vector<std::optional<AuditReport>> props(pairs.size());
    parallel_for(static_cast<Index>(pairs.size()), cx.threads, [&](Index i) {
      const auto& [x, y] = pairs[static_cast<std::size_t>(i)];
      chains[static_cast<std::size_t>(i)] = build_chain(cx.grid, delta, x, y);
      props[static_cast<std::size_t>(i)] =
          propagate_smallness(cx.grid, u.u.values, chains[static_cast<std::size_t>(i)], c.stability.varsigma);
    });
    for (std::size_t i = 0; i < chains.size(); ++i) {
      json cj = to_json(chains[i]);
      cj["pair"] = i;
      j["chains"].push_back(cj);
      json rj = cx.reports({&*props[i]}).at(0);
      rj["delta"] = delta;
      rj["pair"] = i;
      j["reports"].push_back(rj);
      if (i == 0) {
        PlotSeries s{"delta=" + number(delta), {}, {}};
        for (const Point& p : chains[i].centers) {
          s.x.push_back(p[0]);
          s.y.push_back(p[1]);
        }
        plot.push_back(s);
      }
    }
  }
  write_json(cx.file("chain.json"), j);
  write_plot_csv(cx.file("chain_plot.csv"), plot);
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"spectrum", "semigroup",     "forward", "distinguish",
                                              "reconstruct", "observability", "quc",     "chain"};
  return names;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
  f << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << number(row[i]);
    f << '\n';
  }
}

void write_plot_csv(const std::filesystem::path& path, const std::vector<PlotSeries>& series) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot write " + path.string());
  f << "x,y,series\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) f << number(s.x[i]) << ',' << number(s.y[i]) << ',' << s.name << '\n';
  }
}

RunResult run(const std::string& subcommand, const ExperimentConfig& config, const std::filesystem::path& out,
              int threads) {
  RunResult result;
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
    result.status = kExitUsage;
    result.messages.push_back("unknown subcommand '" + subcommand + "'");
    return result;
  }
  result.messages = validate(config);
  if (!result.messages.empty()) {
    result.status = kExitValidation;
    return result;
  }
  try {
    std::filesystem::create_directories(out);
    const Grid grid = config.build_grid();
    Context cx{config, out, std::max(threads, 1), grid, config.build_potential(grid),
               static_cast<std::uint64_t>(config.seed), result};
    if (subcommand == "spectrum") run_spectrum(cx);
    if (subcommand == "semigroup") run_semigroup(cx);
    if (subcommand == "forward") run_forward(cx);
    if (subcommand == "distinguish") run_distinguish(cx);
    if (subcommand == "reconstruct") run_reconstruct(cx);
    if (subcommand == "observability") run_observability(cx);
    if (subcommand == "quc") run_quc(cx);
    if (subcommand == "chain") run_chain(cx);
  } catch (const config_error& e) {
    result.status = kExitValidation;
    result.messages.push_back(e.what());
    return result;
  } catch (const domain_error& e) {
    result.status = kExitValidation;
    result.messages.push_back(e.what());
    return result;
  } catch (const std::exception& e) {
    result.status = kExitFailure;
    result.messages.push_back(e.what());
    return result;
  }
  result.status = result.anomalies.empty() ? kExitOk : kExitAnomaly;
  return result;
}

}  // namespace heatlab
