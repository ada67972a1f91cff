#pragma once

// Command-line front end. run() parses argv, executes one subcommand and
// returns the process exit code: 0 success, 2 validation error, 3 numeric
// failure.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "certiprop/affine.hpp"
#include "certiprop/doubleton.hpp"
#include "certiprop/experiments.hpp"
#include "certiprop/ibp.hpp"
#include "certiprop/oracle.hpp"
#include "certiprop/report.hpp"

namespace certiprop::cli {

using Meta = std::map<std::string, std::string>;

namespace detail {

inline bool parse_switch(const std::string& v, const char* flag) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ValidationError(std::string(flag) + " expects on or off, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    double v = 0;
    const char* end = item.data() + item.size();
    auto [p, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || p != end) throw ValidationError(std::string("bad value '") + item + "' in " + what);
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(std::string(what) + " is empty");
  return out;
}

inline std::vector<Method> parse_methods(const std::string& s) {
  std::vector<Method> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_method(item));
  if (out.empty()) throw ValidationError("method list is empty");
  return out;
}

inline std::vector<Vector> load_points(const std::string& path) {
  const auto j = read_json_file(path);
  const char* key = j.contains("points") ? "points" : "representatives";
  if (!j.is_object() || !j.contains(key) || !j[key].is_array())
    throw ParseError("points file needs a 'points' or 'representatives' array");
  std::vector<Vector> pts;
  for (const auto& p : j[key]) pts.push_back(certiprop::detail::to_vector(certiprop::detail::parse_real_array(p, key)));
  if (pts.empty()) throw ValidationError("points file is empty");
  return pts;
}

class Output {
public:
  explicit Output(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      os_ = &fallback;
    } else {
      file_.open(path, std::ios::binary);
      if (!file_) throw ValidationError("cannot write '" + path + "'");
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }

private:
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

inline bool wants_csv(const std::string& format, const std::string& path) {
  if (format == "csv") return true;
  if (format == "json") return false;
  if (!format.empty()) throw ValidationError("--format expects json or csv");
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

inline void write_report(std::ostream& os, BoundReport r, const Meta& flags, bool csv, bool timing) {
  for (const auto& [k, v] : flags) r.metadata.insert_or_assign(k, v);
  if (csv) {
    experiments::write_metadata(os, r.metadata);
    write_report_csv(os, r, timing);
  } else {
    os << report_to_json(r, timing).dump(2) << '\n';
  }
}

}  // namespace detail

struct CommonFlags {
  std::string model, input, out, format, strategy = "hybrid", softmax = "on";
  double eps = -1.0;
  std::size_t samples = 1000, condense_budget = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  bool timing = false;

  Meta meta(const char* command) const {
    Meta m{{"command", command},
           {"version", kVersion},
           {"model", model},
           {"input", input},
           {"db_strategy", strategy},
           {"softmax", softmax},
           {"samples", std::to_string(samples)},
           {"seed", std::to_string(seed)},
           {"condense_budget", std::to_string(condense_budget)},
           {"eps", eps >= 0 ? certiprop::detail::shortest(eps) : "file"}};
    return m;
  }
};

inline void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--model", f.model, "network JSON")->required();
  cmd->add_option("--input", f.input, "region JSON")->required();
  cmd->add_option("--eps", f.eps, "uniform radius overriding the region file");
  cmd->add_option("--db-strategy", f.strategy, "doubleton frame: s1, s2, s3, hybrid");
  cmd->add_option("--samples", f.samples, "samples for the lower bound");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--softmax", f.softmax, "propagate the final softmax: on or off");
  cmd->add_option("--condense-budget", f.condense_budget, "affine symbol budget per layer (0 = unlimited)");
  cmd->add_option("--out", f.out, "output file ('-' for stdout)");
  cmd->add_option("--format", f.format, "json or csv (default: by extension)");
  cmd->add_option("--threads", f.threads, "worker threads");
  cmd->add_flag("--timing", f.timing, "include wall time in reports");
}

inline BoundReport run_one(Method method, const NetworkSpec& spec, const InputRegion& region, const CommonFlags& f) {
  experiments::SweepOptions opt;
  opt.with_softmax = detail::parse_switch(f.softmax, "--softmax");
  opt.strategy = doubleton::parse_strategy(f.strategy);
  opt.n_samples = f.samples;
  opt.condense_budget = f.condense_budget;
  if (method == Method::LB)
    return oracle::lb_sample(opt.with_softmax ? spec : strip_softmax(spec), region, f.samples, f.seed,
                             resolve_threads(f.threads));
  return experiments::run_method(method, spec, region, opt, f.seed);
}

inline int cmd_propagate(const CommonFlags& f, const std::string& method_name, std::ostream& out) {
  const Method method = parse_method(method_name);
  if (method == Method::EXACT) throw ValidationError("--method expects ibp, aa, da or lb");
  const NetworkSpec spec = load_network(f.model);
  const InputRegion region = load_region(f.input, f.eps);
  doubleton::parse_strategy(f.strategy);
  detail::parse_switch(f.softmax, "--softmax");
  BoundReport r = run_one(method, spec, region, f);
  Meta m = f.meta("propagate");
  m["method"] = method_name;
  detail::Output o(f.out, out);
  detail::write_report(o.stream(), std::move(r), m, detail::wants_csv(f.format, f.out), f.timing);
  return 0;
}

inline int cmd_compare(const CommonFlags& f, bool with_da, std::ostream& out) {
  using certiprop::detail::shortest;
  const NetworkSpec spec = load_network(f.model);
  const InputRegion region = load_region(f.input, f.eps);
  std::vector<Method> methods = {Method::LB, Method::IBP, Method::AA};
  if (with_da) methods.push_back(Method::DA);
  std::vector<BoundReport> reports;
  for (Method m : methods) reports.push_back(run_one(m, spec, region, f));
  const BoundReport& lb = reports[0];
  Meta m = f.meta("compare");
  m["with_da"] = with_da ? "1" : "0";
  detail::Output o(f.out, out);
  std::ostream& os = o.stream();
  experiments::write_metadata(os, m);
  os << "method,coord,lo,hi,width,contains_lb\n";
  for (const auto& r : reports) {
    bool all = true;
    for (std::size_t i = 0; i < r.box.dim(); ++i) {
      const bool c = r.box[i].lo() <= lb.box[i].lo() && lb.box[i].hi() <= r.box[i].hi();
      all = all && c;
      os << method_name(r.method) << ',' << i << ',' << shortest(r.box[i].lo()) << ',' << shortest(r.box[i].hi())
         << ',' << shortest(r.widths[i]) << ',' << (c ? 1 : 0) << '\n';
    }
    os << method_name(r.method) << ",max_width,,," << shortest(r.max_width) << ',' << (all ? 1 : 0) << '\n';
    if (f.timing) os << method_name(r.method) << ",time_s,,," << shortest(r.wall_time.count()) << ",\n";
  }
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"certified bound propagation through feedforward networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonFlags prop;
  std::string method = "ibp";
  auto* p = app.add_subcommand("propagate", "bound the outputs of one network on one region");
  add_common(p, prop);
  p->add_option("--method", method, "ibp, aa, da or lb");

  CommonFlags cmp;
  bool with_da = false;
  auto* c = app.add_subcommand("compare", "run LB, IBP, AA (and DA) and check containment");
  add_common(c, cmp);
  c->add_flag("--with-da", with_da, "include the doubleton method");

  std::size_t w_dim = 64, w_layers = 5, w_trials = 100;
  std::uint64_t w_seed = 0;
  int w_threads = 0;
  std::string w_out;
  auto* w = app.add_subcommand("wrapping", "width growth of IBP, AA and DA on random orthogonal stacks");
  w->add_option("--dim", w_dim, "dimension n");
  w->add_option("--layers", w_layers, "number of layers k");
  w->add_option("--trials", w_trials, "number of trials");
  w->add_option("--seed", w_seed, "random seed");
  w->add_option("--threads", w_threads, "worker threads");
  w->add_option("--out", w_out, "wrapping CSV ('-' for stdout)");

  std::vector<std::size_t> l_dims;
  std::size_t l_samples = 100000;
  std::uint64_t l_seed = 0;
  int l_threads = 0;
  std::string l_out;
  auto* l = app.add_subcommand("lemma-stats", "moments of the l1 norm of a random unit vector");
  l->add_option("--dim", l_dims, "dimension(s) n >= 3")->required();
  l->add_option("--samples", l_samples, "Monte-Carlo samples");
  l->add_option("--seed", l_seed, "random seed");
  l->add_option("--threads", l_threads, "worker threads");
  l->add_option("--out", l_out, "lemma CSV ('-' for stdout)");

  std::string s_model, s_points, s_grid, s_methods = "lb,ibp,aa", s_softmax = "off", s_strategy = "hybrid", s_out;
  std::size_t s_samples = 1000, s_budget = 0;
  std::uint64_t s_seed = 0;
  double s_mask = 0.0;
  bool s_boundary = false;
  int s_threads = 0;
  auto* s = app.add_subcommand("sweep", "mean max output width over an eps grid");
  s->add_option("--model", s_model, "network JSON")->required();
  s->add_option("--points", s_points, "points JSON ({\"points\": [...]} or {\"representatives\": [...]})")->required();
  s->add_flag("--boundary", s_boundary, "treat points as class representatives and bisect to the decision boundary");
  s->add_option("--mask", s_mask, "fraction of input coordinates zeroed per point");
  auto* grid_opt = s->add_option("--eps-grid", s_grid, "comma-separated eps values");
  s->add_option("--methods", s_methods, "comma-separated subset of lb, ibp, aa, da");
  s->add_option("--samples", s_samples, "samples for the lower bound");
  s->add_option("--seed", s_seed, "random seed");
  s->add_option("--softmax", s_softmax, "propagate the final softmax: on or off");
  s->add_option("--db-strategy", s_strategy, "doubleton frame: s1, s2, s3, hybrid");
  s->add_option("--condense-budget", s_budget, "affine symbol budget per layer (0 = unlimited)");
  s->add_option("--threads", s_threads, "worker threads");
  s->add_option("--out", s_out, "sweep CSV ('-' for stdout)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out, err);
      return 2;
    }

    if (*p) return cmd_propagate(prop, method, out);
    if (*c) return cmd_compare(cmp, with_da, out);

    if (*w) {
      const auto st = experiments::run_wrapping(w_dim, w_layers, w_trials, w_seed, resolve_threads(w_threads));
      Meta m{{"command", "wrapping"},         {"version", kVersion},
             {"dim", std::to_string(w_dim)},  {"layers", std::to_string(w_layers)},
             {"trials", std::to_string(w_trials)}, {"seed", std::to_string(w_seed)},
             {"predicted_ratio", certiprop::detail::shortest(st.predicted_ratio)},
             {"E_R_closed", certiprop::detail::shortest(st.E_R_closed)}};
      detail::Output o(w_out, out);
      experiments::write_wrapping_csv(o.stream(), st, m);
      return 0;
    }

    if (*l) {
      std::vector<experiments::LemmaStats> stats;
      for (std::size_t n : l_dims) stats.push_back(experiments::lemma_stats(n, l_samples, l_seed, resolve_threads(l_threads)));
      std::string dims;
      for (std::size_t n : l_dims) dims += (dims.empty() ? "" : ",") + std::to_string(n);
      Meta m{{"command", "lemma-stats"}, {"version", kVersion}, {"dim", dims},
             {"samples", std::to_string(l_samples)}, {"seed", std::to_string(l_seed)}};
      detail::Output o(l_out, out);
      experiments::write_lemma_csv(o.stream(), stats, m);
      return 0;
    }

    if (*s) {
      const NetworkSpec spec = load_network(s_model);
      std::vector<Vector> points = detail::load_points(s_points);
      const std::vector<double> grid =
          grid_opt->count() ? detail::parse_list(s_grid, "eps grid") : experiments::default_eps_grid();
      Meta m{{"command", "sweep"},      {"version", kVersion},          {"model", s_model},
             {"points", s_points},      {"methods", s_methods},         {"softmax", s_softmax},
             {"db_strategy", s_strategy}, {"samples", std::to_string(s_samples)},
             {"seed", std::to_string(s_seed)}, {"condense_budget", std::to_string(s_budget)},
             {"boundary", s_boundary ? "1" : "0"}, {"mask", certiprop::detail::shortest(s_mask)}};
      if (s_boundary) {
        const auto b = experiments::boundary_points(spec, points);
        points = b.points;
        m["boundary_segments"] = std::to_string(b.segments.size());
        m["boundary_skipped"] = std::to_string(b.skipped.size());
        m["representatives"] = "first correctly classified sample per class";
      }
      if (s_mask > 0) points = experiments::mask_inputs(points, s_mask, s_seed);
      experiments::SweepOptions opt;
      opt.with_softmax = detail::parse_switch(s_softmax, "--softmax");
      opt.strategy = doubleton::parse_strategy(s_strategy);
      opt.n_samples = s_samples;
      opt.seed = s_seed;
      opt.condense_budget = s_budget;
      opt.threads = resolve_threads(s_threads);
      const auto res = experiments::run_sweep(spec, points, grid, detail::parse_methods(s_methods), opt);
      for (const auto& [k, v] : res.metadata) m.insert_or_assign(k, v);
      detail::Output o(s_out, out);
      experiments::write_sweep_csv(o.stream(), res, m);
      return 0;
    }
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace certiprop::cli
