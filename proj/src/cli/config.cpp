#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "invprob/cli.hpp"
#include "invprob/mem_solver.hpp"
#include "invprob/spectral_app.hpp"

namespace invprob::cli {

namespace {

using Issues = std::vector<std::string>;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        parts.push_back(trim(item));
    }
    if (!s.empty() && s.back() == sep) {
        parts.emplace_back();
    }
    return parts;
}

std::optional<double> to_real(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::optional<long long> to_integer(const std::string& s) {
    long long v = 0;
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return v;
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

std::string fmt_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i ? "," : "") + fmt_real(values[i]);
    }
    return out;
}

std::string fmt_interval(const std::optional<std::pair<double, double>>& iv) {
    return iv ? fmt_real(iv->first) + "," + fmt_real(iv->second) : "none";
}

const char* command_name(Command c) {
    switch (c) {
        case Command::generate: return "generate";
        case Command::solve: return "solve";
        case Command::sweep: return "sweep";
        case Command::resolution: return "resolution";
    }
    return "?";
}

const char* solver_name(SolverKind s) {
    switch (s) {
        case SolverKind::svd: return "svd";
        case SolverKind::tsvd: return "tsvd";
        case SolverKind::csvd: return "csvd";
        case SolverKind::stdmem: return "stdmem";
        case SolverKind::mem: return "mem";
        case SolverKind::expmem: return "expmem";
        case SolverKind::scmem: return "scmem";
    }
    return "?";
}

std::optional<SolverKind> solver_from(const std::string& s) {
    for (auto k : {SolverKind::svd, SolverKind::tsvd, SolverKind::csvd, SolverKind::stdmem, SolverKind::mem,
                   SolverKind::expmem, SolverKind::scmem}) {
        if (s == solver_name(k)) {
            return k;
        }
    }
    return std::nullopt;
}

std::optional<Command> command_from(const std::string& s) {
    for (auto c : {Command::generate, Command::solve, Command::sweep, Command::resolution}) {
        if (s == command_name(c)) {
            return c;
        }
    }
    return std::nullopt;
}

// Field parsers: each records an issue naming the key and leaves the target untouched on failure.

void real_field(const std::string& key, const std::string& v, Issues& issues, double& out,
                const std::function<bool(double)>& ok, const char* range) {
    const auto x = to_real(v);
    if (!x) {
        issues.push_back(key + ": expected a real number, got '" + v + "'");
    } else if (!ok(*x)) {
        issues.push_back(key + ": " + v + " out of range, must be " + range);
    } else {
        out = *x;
    }
}

template <typename Int>
void int_field(const std::string& key, const std::string& v, Issues& issues, Int& out, long long lo,
               const char* range) {
    const auto x = to_integer(v);
    if (!x) {
        issues.push_back(key + ": expected an integer, got '" + v + "'");
    } else if (*x < lo) {
        issues.push_back(key + ": " + v + " out of range, must be " + range);
    } else {
        out = static_cast<Int>(*x);
    }
}

void bool_field(const std::string& key, const std::string& v, Issues& issues, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        out = true;
    } else if (v == "false" || v == "0" || v == "no" || v == "off") {
        out = false;
    } else {
        issues.push_back(key + ": expected true or false, got '" + v + "'");
    }
}

void choice_field(const std::string& key, const std::string& v, Issues& issues, std::string& out,
                  std::initializer_list<const char*> choices) {
    std::string listing;
    for (const char* c : choices) {
        if (v == c) {
            out = v;
            return;
        }
        listing += listing.empty() ? c : std::string(", ") + c;
    }
    issues.push_back(key + ": '" + v + "' is not one of {" + listing + "}");
}

void list_field(const std::string& key, const std::string& v, Issues& issues, std::vector<double>& out,
                const std::function<bool(double)>& ok, const char* range) {
    std::vector<double> values;
    if (trim(v).empty()) {
        issues.push_back(key + ": empty list");
        return;
    }
    for (const auto& part : split(v, ',')) {
        const auto x = to_real(part);
        if (!x) {
            issues.push_back(key + ": expected a comma-separated list of reals, got '" + v + "'");
            return;
        }
        if (!ok(*x)) {
            issues.push_back(key + ": entry " + part + " out of range, must be " + range);
            return;
        }
        values.push_back(*x);
    }
    out = values;
}

void optional_real_field(const std::string& key, const std::string& v, Issues& issues,
                         std::optional<double>& out, const std::function<bool(double)>& ok, const char* range) {
    if (v == "auto") {
        out.reset();
        return;
    }
    double x = 0.0;
    const auto before = issues.size();
    real_field(key, v, issues, x, ok, range);
    if (issues.size() == before) {
        out = x;
    }
}

void interval_field(const std::string& key, const std::string& v, Issues& issues,
                    std::optional<std::pair<double, double>>& out) {
    if (v == "none") {
        out.reset();
        return;
    }
    const auto parts = split(v, ',');
    if (parts.size() != 2 || !to_real(parts[0]) || !to_real(parts[1])) {
        issues.push_back(key + ": expected 'none' or 'lower,upper', got '" + v + "'");
        return;
    }
    const double lo = *to_real(parts[0]);
    const double hi = *to_real(parts[1]);
    if (!(lo < hi)) {
        issues.push_back(key + ": lower end must be below upper end");
        return;
    }
    out = std::make_pair(lo, hi);
}

void solver_field(const std::string& key, const std::string& v, Issues& issues, SolverKind& out,
                  bool mem_only) {
    const auto s = solver_from(v);
    const bool mem = s && (*s == SolverKind::stdmem || *s == SolverKind::mem || *s == SolverKind::expmem);
    if (!s || (mem_only && !mem)) {
        issues.push_back(key + ": '" + v + "' is not one of {" +
                         (mem_only ? "stdmem, mem, expmem" : "svd, tsvd, csvd, stdmem, mem, expmem, scmem") + "}");
        return;
    }
    out = *s;
}

struct KeySpec {
    std::string name;
    std::function<std::string(Command)> fallback;
    std::function<void(RunConfig&, const std::string&, Issues&)> apply;
    std::function<std::string(const RunConfig&)> render;
    /// Part of the run identity (hash and manifest body).
    bool identity = true;
};

auto fixed(std::string v) {
    return [v = std::move(v)](Command) { return v; };
}

auto positive = [](double x) { return x > 0.0; };
auto nonnegative = [](double x) { return x >= 0.0; };
auto any_real = [](double) { return true; };

std::string default_model_params(const std::string& model) {
    return model == "two_gaussian" ? "0.5,0.5,-1,1,1,1" : "1,0,2";
}

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = [] {
        std::vector<KeySpec> t;
        auto add = [&t](std::string name, std::function<std::string(Command)> fallback,
                        std::function<void(RunConfig&, const std::string&, Issues&)> apply,
                        std::function<std::string(const RunConfig&)> render, bool identity = true) {
            t.push_back({std::move(name), std::move(fallback), std::move(apply), std::move(render), identity});
        };

        add("beta", fixed("10"),
            [](RunConfig& c, const std::string& v, Issues& i) { real_field("beta", v, i, c.beta, positive, "> 0"); },
            [](const RunConfig& c) { return fmt_real(c.beta); });
        add("ntau", fixed("25"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("ntau", v, i, c.ntau, 1, ">= 1"); },
            [](const RunConfig& c) { return std::to_string(c.ntau); });
        add("grid_lower", fixed("-5"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("grid_lower", v, i, c.grid_lower, any_real, "finite");
            },
            [](const RunConfig& c) { return fmt_real(c.grid_lower); });
        add("grid_upper", fixed("5"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("grid_upper", v, i, c.grid_upper, any_real, "finite");
            },
            [](const RunConfig& c) { return fmt_real(c.grid_upper); });
        add("grid_points", fixed("201"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("grid_points", v, i, c.grid_points, 2, ">= 2"); },
            [](const RunConfig& c) { return std::to_string(c.grid_points); });
        add("object", fixed("two_gaussian"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                choice_field("object", v, i, c.object, {"two_gaussian", "delta_pair"});
            },
            [](const RunConfig& c) { return c.object; });
        add("delta0", fixed("1"),
            [](RunConfig& c, const std::string& v, Issues& i) { real_field("delta0", v, i, c.delta0, any_real, "finite"); },
            [](const RunConfig& c) { return fmt_real(c.delta0); });
        add("noise", fixed("0"),
            [](RunConfig& c, const std::string& v, Issues& i) { real_field("noise", v, i, c.noise, nonnegative, ">= 0"); },
            [](const RunConfig& c) { return fmt_real(c.noise); });
        add("seed", fixed("0"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("seed", v, i, c.seed, 0, ">= 0"); },
            [](const RunConfig& c) { return std::to_string(c.seed); });
        add("support", fixed("none"),
            [](RunConfig& c, const std::string& v, Issues& i) { interval_field("support", v, i, c.support); },
            [](const RunConfig& c) { return fmt_interval(c.support); });
        add("normalization", fixed("true"),
            [](RunConfig& c, const std::string& v, Issues& i) { bool_field("normalization", v, i, c.normalization); },
            [](const RunConfig& c) { return std::string(c.normalization ? "true" : "false"); });
        add("sum_rule", fixed("true"),
            [](RunConfig& c, const std::string& v, Issues& i) { bool_field("sum_rule", v, i, c.sum_rule); },
            [](const RunConfig& c) { return std::string(c.sum_rule ? "true" : "false"); });
        add("theta_scale", fixed("10000"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("theta_scale", v, i, c.theta_scale, positive, "> 0");
            },
            [](const RunConfig& c) { return fmt_real(c.theta_scale); });

        add("solver", fixed("tsvd"),
            [](RunConfig& c, const std::string& v, Issues& i) { solver_field("solver", v, i, c.solver, false); },
            [](const RunConfig& c) { return std::string(solver_name(c.solver)); });
        add("rank_tol", fixed("1e-10"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("rank_tol", v, i, c.rank_tol, [](double x) { return x > 0.0 && x < 1.0; }, "in (0, 1)");
            },
            [](const RunConfig& c) { return fmt_real(c.rank_tol); });
        add("cutoff", fixed("auto"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                optional_real_field("cutoff", v, i, c.cutoff, nonnegative, "'auto' or >= 0");
            },
            [](const RunConfig& c) { return c.cutoff ? fmt_real(*c.cutoff) : std::string("auto"); });
        add("csvd_cost", fixed("norm"),
            [](RunConfig& c, const std::string& v, Issues& i) { choice_field("csvd_cost", v, i, c.csvd_cost, {"norm", "chi2"}); },
            [](const RunConfig& c) { return c.csvd_cost; });
        add("alpha", fixed("1"),
            [](RunConfig& c, const std::string& v, Issues& i) { real_field("alpha", v, i, c.alpha, positive, "> 0"); },
            [](const RunConfig& c) { return fmt_real(c.alpha); });
        add("xi", fixed("0.1"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("xi", v, i, c.xi, [](double x) { return x > 0.0 && x <= 1.0; }, "in (0, 1]");
            },
            [](const RunConfig& c) { return fmt_real(c.xi); });
        add("eps", fixed("auto"),
            [](RunConfig& c, const std::string& v, Issues& i) { optional_real_field("eps", v, i, c.eps, positive, "'auto' or > 0"); },
            [](const RunConfig& c) { return c.eps ? fmt_real(*c.eps) : std::string("auto"); });
        add("max_iters", fixed("500"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("max_iters", v, i, c.max_iters, 1, ">= 1"); },
            [](const RunConfig& c) { return std::to_string(c.max_iters); });
        add("max_outer_iters", fixed("30"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                int_field("max_outer_iters", v, i, c.max_outer_iters, 1, ">= 1");
            },
            [](const RunConfig& c) { return std::to_string(c.max_outer_iters); });
        add("floor_rel", fixed("1e-12"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("floor_rel", v, i, c.floor_rel, [](double x) { return x >= 0.0 && x < 1.0; }, "in [0, 1)");
            },
            [](const RunConfig& c) { return fmt_real(c.floor_rel); });
        add("model", fixed("gaussian"),
            [](RunConfig& c, const std::string& v, Issues& i) { choice_field("model", v, i, c.model, {"gaussian", "two_gaussian"}); },
            [](const RunConfig& c) { return c.model; });
        // "auto" is expanded once the model class is known.
        add("model_params", fixed("auto"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                if (v == "auto") {
                    c.model_params.clear();
                } else {
                    list_field("model_params", v, i, c.model_params, any_real, "finite");
                }
            },
            [](const RunConfig& c) { return fmt_list(c.model_params); });
        add("inner", fixed("stdmem"),
            [](RunConfig& c, const std::string& v, Issues& i) { solver_field("inner", v, i, c.inner, true); },
            [](const RunConfig& c) { return std::string(solver_name(c.inner)); });

        add("cutoffs", fixed("0.1,0.05,0.01,0.001"),
            [](RunConfig& c, const std::string& v, Issues& i) { list_field("cutoffs", v, i, c.cutoffs, nonnegative, ">= 0"); },
            [](const RunConfig& c) { return fmt_list(c.cutoffs); });
        add("alphas", fixed("0.0001,0.01,1,100"),
            [](RunConfig& c, const std::string& v, Issues& i) { list_field("alphas", v, i, c.alphas, positive, "> 0"); },
            [](const RunConfig& c) { return fmt_list(c.alphas); });
        add("sweep_seeds", fixed("1"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("sweep_seeds", v, i, c.sweep_seeds, 1, ">= 1"); },
            [](const RunConfig& c) { return std::to_string(c.sweep_seeds); });

        add("betas", fixed("5,10,20"),
            [](RunConfig& c, const std::string& v, Issues& i) { list_field("betas", v, i, c.betas, positive, "> 0"); },
            [](const RunConfig& c) { return fmt_list(c.betas); });
        add("deltas", fixed(fmt_list(ResolutionConfig::default_deltas())),
            [](RunConfig& c, const std::string& v, Issues& i) { list_field("deltas", v, i, c.deltas, nonnegative, ">= 0"); },
            [](const RunConfig& c) { return fmt_list(c.deltas); });
        add("resolution_noise", fixed("0.01"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("resolution_noise", v, i, c.resolution_noise, nonnegative, ">= 0");
            },
            [](const RunConfig& c) { return fmt_real(c.resolution_noise); });
        add("resolution_support", fixed("-2,2"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                interval_field("resolution_support", v, i, c.resolution_support);
            },
            [](const RunConfig& c) { return fmt_interval(c.resolution_support); });
        add("prominence", fixed("0.2"),
            [](RunConfig& c, const std::string& v, Issues& i) {
                real_field("prominence", v, i, c.prominence, nonnegative, ">= 0");
            },
            [](const RunConfig& c) { return fmt_real(c.prominence); });

        add("workers", fixed("0"),
            [](RunConfig& c, const std::string& v, Issues& i) { int_field("workers", v, i, c.workers, 0, ">= 0 (0 = all cores)"); },
            [](const RunConfig& c) { return std::to_string(c.workers); }, false);
        add("output_root", fixed(""),
            [](RunConfig& c, const std::string& v, Issues&) { c.output_root = v; },
            [](const RunConfig& c) { return c.output_root; }, false);
        return t;
    }();
    return table;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& i : issues) {
              msg += "\n  " + i;
          }
          return msg;
      }()),
      issues_(std::move(issues)) {}

RawConfig parse_config_text(const std::string& text) {
    RawConfig raw;
    Issues issues;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            issues.push_back(fmt::format("line {}: expected key=value, got '{}'", number, t));
            continue;
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) {
            issues.push_back(fmt::format("line {}: empty key", number));
            continue;
        }
        if (raw.count(key)) {
            issues.push_back(fmt::format("line {}: duplicate key '{}'", number, key));
            continue;
        }
        raw[key] = trim(t.substr(eq + 1));
    }
    if (!issues.empty()) {
        throw ConfigError(issues);
    }
    return raw;
}

RawConfig read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError({"config: cannot read '" + path.string() + "'"});
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys{"command"};
    for (const auto& k : key_table()) {
        keys.push_back(k.name);
    }
    return keys;
}

RunConfig resolve_config(const std::optional<std::string>& command, const RawConfig& file, const RawConfig& flags) {
    Issues issues;
    RunConfig config;

    std::set<std::string> known;
    for (const auto& k : key_table()) {
        known.insert(k.name);
    }
    for (const auto* source : {&file, &flags}) {
        for (const auto& [key, value] : *source) {
            if (key != "command" && !known.count(key)) {
                issues.push_back(key + ": unknown key");
            }
        }
    }

    std::optional<std::string> cmd = command;
    for (const auto* source : {&file, &flags}) {
        if (const auto it = source->find("command"); it != source->end()) {
            if (cmd && *cmd != it->second) {
                issues.push_back("command: '" + it->second + "' conflicts with '" + *cmd + "'");
            } else {
                cmd = it->second;
            }
        }
    }
    if (!cmd) {
        issues.push_back("command: missing (one of generate, solve, sweep, resolution)");
    } else if (const auto c = command_from(*cmd)) {
        config.command = *c;
    } else {
        issues.push_back("command: '" + *cmd + "' is not one of {generate, solve, sweep, resolution}");
    }

    for (const auto& spec : key_table()) {
        std::string value = spec.fallback(config.command);
        if (const auto it = file.find(spec.name); it != file.end()) {
            value = it->second;
        }
        if (const auto it = flags.find(spec.name); it != flags.end()) {
            value = it->second;
        }
        spec.apply(config, value, issues);
    }

    if (!(config.grid_lower < config.grid_upper)) {
        issues.push_back("grid_lower: must be below grid_upper");
    }
    if (config.sum_rule && config.ntau < 2) {
        issues.push_back("ntau: the sum rule needs at least 2 points (a point at y = beta)");
    }
    const ModelClass cls = config.model == "two_gaussian" ? two_gaussian_model_class() : gaussian_model_class();
    if (config.model_params.empty()) {
        const auto parts = split(default_model_params(config.model), ',');
        for (const auto& p : parts) {
            config.model_params.push_back(*to_real(p));
        }
    }
    if (config.model_params.size() != cls.parameter_count()) {
        issues.push_back(fmt::format("model_params: model '{}' takes {} parameters, got {}", config.model,
                                     cls.parameter_count(), config.model_params.size()));
    } else {
        const Vector p = Eigen::Map<const Vector>(config.model_params.data(),
                                                  static_cast<Eigen::Index>(config.model_params.size()));
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            if (p[k] < cls.lower()[k] || p[k] > cls.upper()[k]) {
                issues.push_back(fmt::format("model_params: {} = {} outside [{}, {}]",
                                             cls.parameter_names()[static_cast<std::size_t>(k)], p[k],
                                             cls.lower()[k], cls.upper()[k]));
            }
        }
    }

    if (config.output_root.empty()) {
        if (const char* env = std::getenv("INVPROB_OUTPUT_ROOT"); env && *env) {
            config.output_root = env;
            config.output_root_source = "env INVPROB_OUTPUT_ROOT";
        } else {
            config.output_root = "runs";
            config.output_root_source = "default";
        }
    } else {
        config.output_root_source = flags.count("output_root") ? "flag" : "config";
    }

    if (!issues.empty()) {
        throw ConfigError(issues);
    }
    return config;
}

std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& config) {
    std::vector<std::pair<std::string, std::string>> entries;
    entries.emplace_back("command", command_name(config.command));
    for (const auto& spec : key_table()) {
        if (spec.identity) {
            entries.emplace_back(spec.name, spec.render(config));
        }
    }
    return entries;
}

std::string config_hash(const RunConfig& config) {
    std::string canonical;
    for (const auto& [k, v] : resolved_entries(config)) {
        canonical += k + "=" + v + "\n";
    }
    return fnv1a_hex(canonical);
}

std::string render_manifest(const RunConfig& config) {
    std::string out = "# invprob run manifest\n";
    out += "# hash=" + config_hash(config) + "\n";
    out += "# output_root=" + config.output_root + " (" + config.output_root_source + ")\n";
    out += "# workers=" + std::to_string(config.workers) + "\n";
    for (const auto& [k, v] : resolved_entries(config)) {
        out += k + "=" + v + "\n";
    }
    return out;
}

}  // namespace invprob::cli
