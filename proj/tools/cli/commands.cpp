// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kvevict/analysis.hpp"
#include "kvevict/attention.hpp"
#include "kvevict/csv.hpp"
#include "kvevict/errors.hpp"
#include "kvevict/policies.hpp"
#include "kvevict/theory.hpp"
#include "kvevict/trace.hpp"
#include "kvevict/traceio.hpp"

namespace kvevict::cli {

namespace {

struct PolicyFlags {
    std::string anchor = "mean-raw";
    std::string metric = "cosine";
    double window_fraction = 0.20;
    bool window_over_pairwise = false;
    std::size_t snap_kernel = 7;
    std::size_t snap_recent = 32;
    std::size_t sink_count = 4;
};

void add_policy_flags(CLI::App* sub, PolicyFlags& f) {
    sub->add_option("--anchor", f.anchor, "KeyDiff anchor: mean-raw | mean-normalized | median")
        ->capture_default_str();
    sub->add_option("--metric", f.metric, "KeyDiff metric: cosine | dot | euclidean")->capture_default_str();
    sub->add_option("--window-fraction", f.window_fraction, "Sliding-window share of the budget")
        ->capture_default_str();
    sub->add_flag("--window-over-pairwise", f.window_over_pairwise,
                  "Score non-window tokens with pairwise KeyDiff in keydiff-sliding");
    sub->add_option("--snap-kernel", f.snap_kernel, "SnapKV pooling kernel")->capture_default_str();
    sub->add_option("--snap-recent", f.snap_recent, "SnapKV protected recent tokens")->capture_default_str();
    sub->add_option("--sink-count", f.sink_count, "Sink tokens kept by the sink policy")->capture_default_str();
}

std::size_t parse_size(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ConfigError(std::string(what) + ": '" + std::string(text) + "' is not a non-negative integer");
    }
    return v;
}

double parse_real(std::string_view text, std::string_view what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ConfigError(std::string(what) + ": '" + std::string(text) + "' is not a number");
    }
    return v;
}

// "name[:key=value...]" with keys anchor, metric, window, kernel, recent, sink.
PolicySpec make_policy(std::string_view entry, const PolicyFlags& f, std::uint64_t seed) {
    PolicySpec p;
    p.anchor = parse_anchor(f.anchor);
    p.metric = parse_metric(f.metric);
    p.window_fraction = f.window_fraction;
    p.window_over_pairwise = f.window_over_pairwise;
    p.snap_kernel = f.snap_kernel;
    p.snap_recent = f.snap_recent;
    p.sink_count = f.sink_count;
    p.seed = seed;

    std::size_t colon = entry.find(':');
    p.kind = parse_policy_kind(entry.substr(0, colon));
    while (colon != std::string_view::npos) {
        const std::size_t next = entry.find(':', colon + 1);
        const auto item = entry.substr(colon + 1, next == std::string_view::npos ? next : next - colon - 1);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("policy option '" + std::string(item) + "' is not key=value");
        }
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        if (key == "anchor") {
            p.anchor = parse_anchor(value);
        } else if (key == "metric") {
            p.metric = parse_metric(value);
        } else if (key == "window") {
            p.window_fraction = parse_real(value, "window");
        } else if (key == "kernel") {
            p.snap_kernel = parse_size(value, "kernel");
        } else if (key == "recent") {
            p.snap_recent = parse_size(value, "recent");
        } else if (key == "sink") {
            p.sink_count = parse_size(value, "sink");
        } else {
            throw ConfigError("unknown policy option '" + std::string(key) + "'");
        }
        colon = next;
    }
    return p;
}

struct SourceFlags {
    std::string trace_path;
    std::string synth;
};

void add_source_flags(CLI::App* sub, SourceFlags& s) {
    sub->add_option("--trace", s.trace_path, "KVTR trace file");
    sub->add_option("--synth", s.synth, "Synthetic trace spec, e.g. T=64,d=16,outliers=2");
}

bool uses_synth(const SourceFlags& s) { return s.trace_path.empty(); }

TokenTrace load_source(const SourceFlags& s, std::uint64_t seed) {
    if (!s.trace_path.empty() && !s.synth.empty()) {
        throw ConfigError("--trace and --synth are mutually exclusive");
    }
    if (!s.trace_path.empty()) {
        return read_trace(s.trace_path);
    }
    SynthSpec base;
    base.seed = seed;
    return synth_trace(parse_synth_spec(s.synth, base));
}

class Output {
public:
    Output(const std::string& path, std::ostream& fallback) : m_path(path), m_fallback(fallback) {}

    void write(const std::string& text) {
        if (m_path.empty() || m_path == "-") {
            m_fallback << text;
            m_fallback.flush();
            return;
        }
        std::ofstream f(m_path, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw IoError("cannot open " + m_path + " for writing");
        }
        f << text;
        f.flush();
        if (!f) {
            throw IoError("write to " + m_path + " failed");
        }
    }

private:
    std::string m_path;
    std::ostream& m_fallback;
};

double jaccard(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    std::vector<std::int64_t> common;
    std::ranges::set_intersection(a, b, std::back_inserter(common));
    const std::size_t uni = a.size() + b.size() - common.size();
    return uni == 0 ? 1.0 : static_cast<double>(common.size()) / static_cast<double>(uni);
}

KVCache full_cache(const TokenTrace& trace, std::size_t layer, std::size_t kv_head) {
    KVCache c(trace.head_dim, trace.seq_len);
    c.append(trace.key(layer, kv_head), trace.value(layer, kv_head), 0);
    return c;
}

std::string fmt(double x, int precision = 6) {
    std::ostringstream s;
    s << std::setprecision(precision) << x;
    return s.str();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    SourceFlags source;
    PolicyFlags flags;
    std::string policy = "keydiff";
    std::size_t budget = 0;
    std::size_t block = 128;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    const PolicySpec policy = make_policy(a.policy, a.flags, a.seed);
    policy.validate(a.budget);
    const TokenTrace trace = load_source(a.source, a.seed);
    const auto model = AttentionModel::for_trace(trace);
    const auto report = run_block_prompt(trace, model, policy, a.budget, a.block, workers_from_env());
    Output(a.out, out).write(format_csv(simulation_rows(report), CsvSchema::Simulation));
    err << "simulate: " << policy.label() << " budget=" << a.budget << " block=" << a.block << " streams="
        << report.streams.size() << " T=" << trace.seq_len << "\n";
    return kExitOk;
}

struct CompareArgs {
    SourceFlags source;
    PolicyFlags flags;
    std::vector<std::string> policies;
    std::size_t budget = 0;
    std::size_t block = 128;
    std::uint64_t seed = 0;
    std::size_t seeds = 1;
    std::string out;
    std::string diversity_out;
};

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
    if (a.policies.empty()) {
        throw ConfigError("compare: --policies needs at least one entry");
    }
    if (a.seeds == 0) {
        throw ConfigError("compare: --seeds must be at least 1");
    }
    if (!uses_synth(a.source) && a.seeds != 1) {
        throw ConfigError("compare: --seeds applies to synthetic sources only");
    }
    std::vector<PolicySpec> specs;
    for (const auto& entry : a.policies) {
        specs.push_back(make_policy(entry, a.flags, a.seed));
        specs.back().validate(a.budget);
    }
    const std::size_t P = specs.size();
    const std::size_t workers = workers_from_env();

    // retained[p] lists every (seed, stream, block) retention set in a fixed order.
    std::vector<std::vector<std::vector<std::int64_t>>> retained(P);
    std::vector<double> logdet_before(P, 0.0);
    std::vector<double> logdet_after(P, 0.0);
    std::vector<double> mean_cos(P, 0.0);
    std::vector<std::size_t> mean_cos_count(P, 0);
    std::size_t stream_count = 0;

    for (std::size_t s = 0; s < a.seeds; ++s) {
        const TokenTrace trace = load_source(a.source, a.seed + s);
        const auto model = AttentionModel::for_trace(trace);
        for (std::size_t p = 0; p < P; ++p) {
            PolicySpec spec = specs[p];
            spec.seed = a.seed + s;
            const auto report = run_block_prompt(trace, model, spec, a.budget, a.block, workers);
            for (const auto& stream : report.streams) {
                for (const auto& b : stream.blocks) {
                    retained[p].push_back(b.retained_time_ids);
                }
                const auto d = diversity_report(full_cache(trace, stream.layer, stream.kv_head), stream.final_cache);
                logdet_before[p] += d.logdet_before;
                logdet_after[p] += d.logdet_after;
                if (d.mean_cos_after) {
                    mean_cos[p] += *d.mean_cos_after;
                    ++mean_cos_count[p];
                }
            }
        }
        stream_count += trace.layers * trace.kv_heads;
    }

    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < P; ++j) {
            double overlap = 0.0;
            std::size_t identical = 0;
            const std::size_t events = retained[i].size();
            for (std::size_t e = 0; e < events; ++e) {
                overlap += jaccard(retained[i][e], retained[j][e]);
                identical += retained[i][e] == retained[j][e] ? 1 : 0;
            }
            const double denom = static_cast<double>(std::max<std::size_t>(events, 1));
            rows.push_back({a.policies[i], a.policies[j], overlap / denom, static_cast<double>(identical) / denom});
        }
    }
    Output(a.out, out).write(format_csv(rows, CsvSchema::Overlap));

    std::vector<CsvRow> div_rows;
    const double n_streams = static_cast<double>(stream_count);
    for (std::size_t p = 0; p < P; ++p) {
        DiversityReport d;
        d.logdet_before = logdet_before[p] / n_streams;
        d.logdet_after = logdet_after[p] / n_streams;
        if (mean_cos_count[p] > 0) {
            d.mean_cos_after = mean_cos[p] / static_cast<double>(mean_cos_count[p]);
        }
        div_rows.push_back(diversity_row(a.policies[p], d));
        err << "compare: " << specs[p].label() << " mean logdet after=" << fmt(*std::get_if<double>(&div_rows.back()[2]))
            << "\n";
    }
    if (!a.diversity_out.empty()) {
        Output(a.diversity_out, out).write(format_csv(div_rows, CsvSchema::Diversity));
    }
    return kExitOk;
}

struct VerifyArgs {
    std::size_t instances = 10000;
    std::uint64_t seed = 0;
    std::string fault = "none";
    std::string out;
};

int cmd_verify_theory(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
    Fault fault = Fault::None;
    if (a.fault == "sign-flip") {
        fault = Fault::SignFlip;
    } else if (a.fault != "none") {
        throw ConfigError("unknown fault '" + a.fault + "' (expected none | sign-flip)");
    }
    std::vector<VerificationSummary> summaries;
    if (a.instances > 0) {
        summaries.push_back(verify_attention_bound(a.instances, a.seed, fault));
        summaries.push_back(verify_anchor_bound(a.instances, a.seed + 1, fault));
        summaries.push_back(verify_orthsum(a.instances, a.seed + 2, fault));
    }
    Output(a.out, out).write(format_csv(bounds_rows(summaries), CsvSchema::Bounds));
    std::size_t violations = 0;
    for (const auto& s : summaries) {
        violations += s.violations;
        err << "verify-theory: " << s.check << " instances=" << s.instances << " violations=" << s.violations;
        if (s.skipped > 0) {
            err << " skipped=" << s.skipped;
        }
        if (s.max_slack) {
            err << " max_slack=" << fmt(*s.max_slack);
        }
        err << "\n";
    }
    return violations == 0 ? kExitOk : kExitTheoryViolation;
}

struct FlopsArgs {
    std::uint64_t n = 0;
    std::uint64_t d = 0;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out, std::ostream& err) {
    const auto r = flop_count_keydiff(a.n, a.d);
    out << r.weighted_total << "\n";
    err << "flops: n=" << r.n << " d=" << r.d << " mul=" << r.mults << " add=" << r.adds << " div=" << r.divs
        << " sqrt=" << r.sqrts << "\n";
    return kExitOk;
}

struct BenchArgs {
    PolicyFlags flags;
    std::string policy = "keydiff-efficient";
    std::size_t d = 8;
    std::size_t n_min = 1024;
    std::size_t n_max = 32768;
    std::size_t trials = 5;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    if (a.n_min < 2 || a.n_max < a.n_min) {
        throw ConfigError("bench: need 2 <= --n-min <= --n-max");
    }
    const PolicySpec policy = make_policy(a.policy, a.flags, a.seed);
    std::vector<std::size_t> grid;
    for (std::size_t n = a.n_min; n <= a.n_max; n *= 2) {
        grid.push_back(n);
    }
    const auto result = scaling_bench(policy, grid, a.d, a.trials, a.seed);
    Output(a.out, out).write(format_csv(scaling_rows(a.policy, result), CsvSchema::Scaling));
    err << "bench: " << policy.label() << " d=" << a.d << " log-log slope=" << fmt(result.slope, 4) << "\n";
    return kExitOk;
}

struct GenTraceArgs {
    std::string synth;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen_trace(const GenTraceArgs& a, std::ostream&, std::ostream& err) {
    SynthSpec base;
    base.seed = a.seed;
    const auto spec = parse_synth_spec(a.synth, base);
    const auto trace = synth_trace(spec);
    write_trace(trace, a.out);
    err << "gen-trace: wrote " << a.out << " (layers=" << trace.layers << " q_heads=" << trace.q_heads
        << " kv_heads=" << trace.kv_heads << " d=" << trace.head_dim << " T=" << trace.seq_len << ")\n";
    return kExitOk;
}

struct CorrelateArgs {
    SourceFlags source;
    std::uint64_t seed = 0;
    std::string out;
    std::string scatter_out;
};

int cmd_correlate(const CorrelateArgs& a, std::ostream& out, std::ostream& err) {
    const TokenTrace trace = load_source(a.source, a.seed);
    const auto model = AttentionModel::for_trace(trace);
    const auto rows = correlation_report(trace, model);
    Output(a.out, out).write(format_csv(correlation_rows(rows), CsvSchema::Correlation));
    const auto pipeline = bound_pipeline(trace, model);
    if (!a.scatter_out.empty()) {
        Output(a.scatter_out, out).write(format_csv(keyscatter_rows(pipeline.rows), CsvSchema::KeyScatter));
    }
    for (const auto& h : pipeline.heads) {
        err << "correlate: layer=" << h.layer << " q_head=" << h.head
            << " rho(w, keydiff)=" << (h.rho ? fmt(*h.rho, 4) : std::string("undefined"))
            << " top_key_agrees=" << (h.top_key_agrees ? "yes" : "no") << "\n";
    }
    return kExitOk;
}

}  // namespace

std::size_t workers_from_env() {
    const char* env = std::getenv("KVEVICT_WORKERS");
    if (env == nullptr || *env == '\0') {
        return std::max(1u, std::thread::hardware_concurrency());
    }
    const std::size_t n = parse_size(env, "KVEVICT_WORKERS");
    if (n == 0) {
        throw ConfigError("KVEVICT_WORKERS must be at least 1");
    }
    return n;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"KV-cache eviction simulator and analysis harness", "kvevict"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "kvevict 0.1.0");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run block-wise prompt processing under a cache budget");
    add_source_flags(simulate, sim.source);
    add_policy_flags(simulate, sim.flags);
    simulate->add_option("--policy", sim.policy, "Eviction policy")->capture_default_str();
    simulate->add_option("--budget", sim.budget, "Cache budget N")->required();
    simulate->add_option("--block", sim.block, "Block size B")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "Seed for synthetic traces and the random policy")
        ->capture_default_str();
    simulate->add_option("--out", sim.out, "Simulation CSV path (stdout if omitted)");

    CompareArgs cmp;
    auto* compare = app.add_subcommand("compare", "Retained-set overlap and diversity across policies");
    add_source_flags(compare, cmp.source);
    add_policy_flags(compare, cmp.flags);
    compare->add_option("--policies", cmp.policies, "Comma-separated policies, each name[:key=value...]")
        ->delimiter(',')
        ->required();
    compare->add_option("--budget", cmp.budget, "Cache budget N")->required();
    compare->add_option("--block", cmp.block, "Block size B")->capture_default_str();
    compare->add_option("--seed", cmp.seed, "First seed")->capture_default_str();
    compare->add_option("--seeds", cmp.seeds, "Number of consecutive synthetic seeds")->capture_default_str();
    compare->add_option("--out", cmp.out, "Overlap CSV path (stdout if omitted)");
    compare->add_option("--diversity-out", cmp.diversity_out, "Diversity CSV path");

    VerifyArgs ver;
    auto* verify = app.add_subcommand("verify-theory", "Randomized checks of the similarity bounds");
    verify->add_option("--instances", ver.instances, "Instances per check")->capture_default_str();
    verify->add_option("--seed", ver.seed, "Seed")->capture_default_str();
    verify->add_option("--inject-fault", ver.fault, "Negative control: none | sign-flip")->capture_default_str();
    verify->add_option("--out", ver.out, "Bounds CSV path (stdout if omitted)");

    FlopsArgs fl;
    auto* flops = app.add_subcommand("flops", "Weighted operation count of the anchor-form KeyDiff score");
    flops->add_option("--n", fl.n, "Cached tokens")->required();
    flops->add_option("--d", fl.d, "Head dimension")->required();

    BenchArgs bn;
    auto* bench = app.add_subcommand("bench", "Scoring time against cache size, with log-log slope");
    add_policy_flags(bench, bn.flags);
    bench->add_option("--policy", bn.policy, "Eviction policy")->capture_default_str();
    bench->add_option("--d", bn.d, "Head dimension")->capture_default_str();
    bench->add_option("--n-min", bn.n_min, "Smallest n (doubled up to --n-max)")->capture_default_str();
    bench->add_option("--n-max", bn.n_max, "Largest n")->capture_default_str();
    bench->add_option("--trials", bn.trials, "Timed trials per n")->capture_default_str();
    bench->add_option("--seed", bn.seed, "Seed")->capture_default_str();
    bench->add_option("--out", bn.out, "Scaling CSV path (stdout if omitted)");

    GenTraceArgs gen;
    auto* gen_trace = app.add_subcommand("gen-trace", "Write a synthetic KVTR trace");
    gen_trace->add_option("--synth", gen.synth, "Synthetic trace spec");
    gen_trace->add_option("--seed", gen.seed, "Seed")->capture_default_str();
    gen_trace->add_option("--out", gen.out, "Output .kvtr path")->required();

    CorrelateArgs cor;
    auto* correlate = app.add_subcommand("correlate", "Key dissimilarity against received attention, per head");
    add_source_flags(correlate, cor.source);
    correlate->add_option("--seed", cor.seed, "Seed for synthetic traces")->capture_default_str();
    correlate->add_option("--out", cor.out, "Correlation CSV path (stdout if omitted)");
    correlate->add_option("--scatter-out", cor.scatter_out, "Per-key scatter CSV path");

    std::vector<const char*> argv{"kvevict"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (simulate->parsed()) {
            return cmd_simulate(sim, out, err);
        }
        if (compare->parsed()) {
            return cmd_compare(cmp, out, err);
        }
        if (verify->parsed()) {
            return cmd_verify_theory(ver, out, err);
        }
        if (flops->parsed()) {
            return cmd_flops(fl, out, err);
        }
        if (bench->parsed()) {
            return cmd_bench(bn, out, err);
        }
        if (gen_trace->parsed()) {
            return cmd_gen_trace(gen, out, err);
        }
        if (correlate->parsed()) {
            return cmd_correlate(cor, out, err);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DimError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << " (byte offset " << e.offset() << ")\n";
        return kExitIo;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitConfig;
}

}  // namespace kvevict::cli
