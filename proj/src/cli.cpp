#include "blueprint/cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "blueprint/align.hpp"
#include "blueprint/anchors.hpp"
#include "blueprint/corpus.hpp"
#include "blueprint/ngramstats.hpp"
#include "blueprint/planner.hpp"
#include "blueprint/probdist.hpp"
#include "blueprint/probe.hpp"
#include "blueprint/shannon.hpp"

namespace blueprint::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Raised for problems with the invocation or its inputs rather than the analysis.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Settings {
    align::MsaOptions msa;
    align::OverlapOptions overlap;
    std::string overlap_metric = "pairwise_match";
    anchors::AnchorOptions anchor;
    ngrams::NgramConfig ngram;
    std::size_t max_rank = 10;
    std::string baseline;
    probe::TrainOptions train;
    std::vector<int> offsets{1, 2, 3};
    double val_fraction = 0.1;
    std::uint64_t split_seed = 0;
    std::uint64_t mdp_seed = 1;
    std::size_t mdp_count = 10;
    std::size_t mdp_max_states = 10;
    std::size_t mdp_max_actions = 4;
    double mdp_tol = 1e-8;
    std::string tie = "strict";
    std::string granularity = "token";
    unsigned jobs = 1;

    void finalize() { overlap.metric = align::overlap_metric_from_string(overlap_metric); }
};

Json align_config(const Settings& s) {
    const auto& sc = s.msa.scheme;
    return {{"match", sc.match},
            {"mismatch", sc.mismatch},
            {"gap_open", sc.gap_open},
            {"gap_extend", sc.gap_extend},
            {"kmer", s.msa.kmer},
            {"length_cap", s.msa.length_cap},
            {"overlap_metric", s.overlap_metric},
            {"overlap_min_support", s.overlap.min_support},
            {"overlap_sigma", s.overlap.sigma}};
}

Json anchor_config(const Settings& s) {
    Json j = align_config(s);
    j["anchor_min_chars"] = s.anchor.min_length;
    j["anchor_threshold"] = s.anchor.threshold;
    j["anchor_max_spans"] = s.anchor.max_spans;
    return j;
}

Json ngram_config(const Settings& s) {
    return {{"support_n", s.ngram.support_ns}, {"unique_n", s.ngram.unique_ns}, {"histogram_n", s.ngram.histogram_n}};
}

Json probdist_config(const Settings& s) { return {{"max_rank", s.max_rank}, {"baseline", s.baseline}}; }

Json probe_config(const Settings& s) {
    return {{"offsets", s.offsets},       {"epochs", s.train.epochs},         {"lr", s.train.lr},
            {"batch", s.train.batch},     {"probe_seed", s.train.seed},       {"val_fraction", s.val_fraction},
            {"split_seed", s.split_seed}};
}

Json bellman_config(const Settings& s) {
    return {{"seed", s.mdp_seed},
            {"count", s.mdp_count},
            {"max_states", s.mdp_max_states},
            {"max_actions", s.mdp_max_actions},
            {"tol", s.mdp_tol}};
}

Json shannon_config(const Settings& s) { return {{"tie", s.tie}, {"granularity", s.granularity}}; }

Json meta(const std::string& command, Json config) {
    return {{"tool", "blueprint"}, {"version", kVersion}, {"command", command}, {"config", std::move(config)}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
    out << text;
    if (!out) throw Error(fmt::format("{}: write failed", path.string()));
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

class Csv {
public:
    Csv(const Json& meta, const std::string& header) { text_ = "# " + meta.dump() + "\n" + header + "\n"; }
    template <typename... Args>
    void row(fmt::format_string<Args...> f, Args&&... args) {
        text_ += fmt::format(f, std::forward<Args>(args)...);
        text_ += '\n';
    }
    void save(const fs::path& path) const { write_text(path, text_); }

private:
    std::string text_;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError(fmt::format("{}: cannot create output directory", dir.string()));
}

void require_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw UsageError(fmt::format("{}: no such file", path.string()));
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads; results come back in
/// index order and the lowest-index failure is rethrown.
template <typename F>
auto parallel_map(std::size_t n, unsigned jobs, F&& f) {
    using T = decltype(f(std::size_t{}));
    std::vector<std::optional<T>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                results[i].emplace(f(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t threads = std::min<std::size_t>(std::max(1u, jobs), std::max<std::size_t>(n, 1));
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(n);
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

template <typename F>
auto for_prompt(const corpus::GenerationSet& gs, F&& f) {
    try {
        return f();
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(fmt::format("prompt {}: {}", gs.prompt_id, e.what()));
    }
}

std::vector<corpus::GenerationSet> load_sets(const fs::path& path, const std::string& prompt) {
    require_file(path);
    auto sets = corpus::load_generation_sets(path);
    if (sets.empty()) throw UsageError(fmt::format("{}: no generation sets found", path.string()));
    if (!prompt.empty()) {
        std::erase_if(sets, [&](const auto& gs) { return gs.prompt_id != prompt; });
        if (sets.empty()) throw UsageError(fmt::format("{}: prompt '{}' not found", path.string(), prompt));
    }
    return sets;
}

// Output files are named after the prompt id; keep them inside the directory.
std::string file_stem(const std::string& id) {
    std::string s;
    for (char c : id) s.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    return s.empty() ? "_" : s;
}

// ---- align ----

struct AlignResult {
    std::string prompt_id;
    align::Msa msa;
    align::OverlapCurve curve;
    double sp_score = 0.0;
};

std::vector<AlignResult> align_sets(const std::vector<corpus::GenerationSet>& sets, const Settings& s) {
    return parallel_map(sets.size(), s.jobs, [&](std::size_t i) {
        const auto& gs = sets[i];
        return for_prompt(gs, [&] {
            AlignResult r;
            r.prompt_id = gs.prompt_id;
            r.msa = align::progressive_msa(gs, s.msa);
            r.curve = align::overlap_curve(r.msa, s.overlap);
            r.sp_score = align::sum_of_pairs_score(r.msa, s.msa.scheme);
            return r;
        });
    });
}

void write_curve(const fs::path& path, const Json& m, const align::OverlapCurve& c) {
    Csv csv(m, "position,value");
    for (std::size_t i = 0; i < c.values.size(); ++i) csv.row("{},{}", i, c.values[i]);
    csv.save(path);
}

void emit_align(const fs::path& out, const std::vector<AlignResult>& results, const Json& m) {
    ensure_dir(out);
    Json prompts = Json::array();
    std::vector<align::OverlapCurve> curves;
    for (const auto& r : results) {
        const auto stem = file_stem(r.prompt_id);
        std::string text;
        for (std::size_t row = 0; row < r.msa.size(); ++row) text += r.msa.render(row) + "\n";
        write_text(out / (stem + ".msa.txt"), text);
        write_curve(out / (stem + ".overlap.csv"), m, r.curve);
        curves.push_back(r.curve);
        prompts.push_back({{"prompt_id", r.prompt_id},
                           {"rows", r.msa.size()},
                           {"columns", r.msa.columns},
                           {"row_sample_index", r.msa.row_ids},
                           {"sum_of_pairs", r.sp_score},
                           {"overlap", r.curve.values}});
    }
    write_curve(out / "overlap_mean.csv", m, align::mean_curve(curves));
    Json run = {{"meta", m}, {"prompts", prompts}};
    write_json(out / "align.run.json", run);
}

// ---- anchors ----

struct AnchorResult {
    std::string prompt_id;
    std::vector<int> row_ids;
    std::size_t rows = 0;
    std::vector<anchors::AnchorSpan> spans;
    anchors::SankeyGraph graph;
};

std::vector<AnchorResult> anchor_sets(const std::vector<corpus::GenerationSet>& sets, const Settings& s) {
    return parallel_map(sets.size(), s.jobs, [&](std::size_t i) {
        const auto& gs = sets[i];
        return for_prompt(gs, [&] {
            const auto msa = align::progressive_msa(gs, s.msa);
            AnchorResult r;
            r.prompt_id = gs.prompt_id;
            r.row_ids = msa.row_ids;
            r.rows = msa.size();
            r.spans = anchors::select_anchor_spans(anchors::enumerate_candidate_spans(msa, s.anchor), msa.size(),
                                                   s.anchor);
            r.graph = anchors::build_sankey(msa.size(), r.spans);
            return r;
        });
    });
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    return out;
}

std::string sankey_svg(const anchors::SankeyGraph& g, std::size_t rows) {
    constexpr double kWidth = 960, kHeight = 420, kTop = 60, kBand = 300, kNodeWidth = 14;
    const auto count = g.nodes.size();
    const double step = (kWidth - 80) / static_cast<double>(std::max<std::size_t>(count - 1, 1));
    const double unit = kBand / static_cast<double>(std::max<std::size_t>(rows, 1));
    std::vector<double> x(count), out_cursor(count, kTop), in_cursor(count, kTop);
    for (std::size_t i = 0; i < count; ++i) x[i] = 40 + step * static_cast<double>(i);

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kWidth, kHeight, kWidth, kHeight);
    for (const auto& l : g.links) {
        const double h = unit * static_cast<double>(l.value);
        const double x0 = x[static_cast<std::size_t>(l.source)] + kNodeWidth, x1 = x[static_cast<std::size_t>(l.target)];
        const double y0 = out_cursor[static_cast<std::size_t>(l.source)], y1 = in_cursor[static_cast<std::size_t>(l.target)];
        out_cursor[static_cast<std::size_t>(l.source)] += h;
        in_cursor[static_cast<std::size_t>(l.target)] += h;
        const double mid = (x0 + x1) / 2;
        svg += fmt::format(
            "<path d=\"M{0:.2f},{1:.2f} C{2:.2f},{1:.2f} {2:.2f},{3:.2f} {4:.2f},{3:.2f} "
            "L{4:.2f},{5:.2f} C{2:.2f},{5:.2f} {2:.2f},{6:.2f} {0:.2f},{6:.2f} Z\" "
            "fill=\"#4a7bb7\" fill-opacity=\"0.35\"><title>{7}</title></path>\n",
            x0, y0, mid, y1, x1, y1 + h, y0 + h, l.value);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const auto& n = g.nodes[i];
        const double h = unit * static_cast<double>(n.support);
        svg += fmt::format(
            "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{}\" height=\"{:.2f}\" fill=\"#333\"><title>{}</title></rect>\n",
            x[i], kTop, kNodeWidth, h, xml_escape(n.label));
        svg += fmt::format(
            "<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"10\" font-family=\"sans-serif\" "
            "transform=\"rotate(-20 {:.2f} {:.2f})\">{}</text>\n",
            x[i], kTop - 8, x[i], kTop - 8, xml_escape(anchors::display_label(n.label).substr(0, 24)));
    }
    svg += "</svg>\n";
    return svg;
}

Json anchor_json(const AnchorResult& r, const Json& m) {
    Json spans = Json::array();
    for (std::size_t k = 0; k < r.spans.size(); ++k) {
        const auto& sp = r.spans[k];
        std::vector<int> samples;
        for (int row : sp.support) samples.push_back(r.row_ids[static_cast<std::size_t>(row)]);
        spans.push_back({{"rank", k + 1},
                         {"col_start", sp.col_start},
                         {"col_end", sp.col_end},
                         {"length_chars", sp.length_chars},
                         {"support_count", samples.size()},
                         {"support_fraction", static_cast<double>(samples.size()) / static_cast<double>(r.rows)},
                         {"support", samples},
                         {"text", sp.text}});
    }
    return {{"meta", m}, {"prompt_id", r.prompt_id}, {"generations", r.rows}, {"spans", spans}};
}

Json sankey_json(const AnchorResult& r, const Json& m) {
    Json nodes = Json::array(), links = Json::array();
    for (const auto& n : r.graph.nodes)
        nodes.push_back({{"id", n.id},
                         {"label", n.label},
                         {"display_label", anchors::display_label(n.label)},
                         {"col_start", n.col_start},
                         {"col_end", n.col_end},
                         {"support", n.support}});
    for (const auto& l : r.graph.links) links.push_back({{"source", l.source}, {"target", l.target}, {"value", l.value}});
    return {{"meta", m}, {"prompt_id", r.prompt_id}, {"nodes", nodes}, {"links", links}};
}

void emit_anchors(const fs::path& out, const std::vector<AnchorResult>& results, const Json& m) {
    ensure_dir(out);
    for (const auto& r : results) {
        const auto stem = file_stem(r.prompt_id);
        write_json(out / (stem + ".anchors.json"), anchor_json(r, m));
        write_json(out / (stem + ".sankey.json"), sankey_json(r, m));
        write_text(out / (stem + ".sankey.svg"), sankey_svg(r.graph, r.rows));
    }
}

// ---- ngrams ----

struct LabeledReport {
    std::string label;
    ngrams::NgramReport report;
};

void emit_ngrams(const fs::path& out, const std::vector<LabeledReport>& reports, const Settings& s, const Json& m) {
    ensure_dir(out);
    Csv support(m, "label,n,mean_max_support"), unique(m, "label,n,mean_unique_fraction"),
        hist(m, "label,n,support,ngrams,mean_per_prompt");
    for (const auto& [label, r] : reports) {
        for (const auto& [n, v] : r.max_support) support.row("{},{},{}", label, n, v);
        for (const auto& [n, v] : r.unique_fraction) unique.row("{},{},{}", label, n, v);
        for (const auto& [bin, count] : r.sharing_histogram)
            hist.row("{},{},{},{},{}", label, s.ngram.histogram_n, bin, count,
                     r.sharing_histogram_mean.at(bin));
    }
    support.save(out / "ngrams.max_support.csv");
    unique.save(out / "ngrams.unique_fraction.csv");
    hist.save(out / "ngrams.sharing_histogram.csv");
}

LabeledReport ngram_for(const std::vector<corpus::GenerationSet>& sets, const std::string& label,
                        const Settings& s) {
    return {label, ngrams::ngram_report(sets, s.ngram)};
}

// ---- probdist ----

struct TraceGroup {
    std::string label;
    std::vector<corpus::DistributionTrace> traces;
};

void emit_probdist(const fs::path& out, const std::vector<TraceGroup>& groups, const Settings& s, const Json& m) {
    ensure_dir(out);
    Csv conc(m, "label,rank,cumulative"), summary(m, "label,steps,mean_tail_mass,mean_nonnegligible"),
        ppl(m, "label,source,tokens,perplexity,delta_absolute,delta_relative");

    std::map<std::string, std::map<corpus::TraceSource, probdist::PerplexityReport>> reports;
    for (const auto& g : groups) {
        const auto curve = probdist::concentration_curve(g.traces, s.max_rank);
        for (std::size_t k = 0; k < curve.cumulative.size(); ++k) conc.row("{},{},{}", g.label, k + 1, curve.cumulative[k]);
        summary.row("{},{},{},{}", g.label, curve.steps, curve.mean_tail_mass, probdist::mean_nonnegligible(g.traces));
        std::map<corpus::TraceSource, std::vector<corpus::DistributionTrace>> by_source;
        for (const auto& t : g.traces) by_source[t.source].push_back(t);
        for (const auto& [source, traces] : by_source) reports[g.label][source] = probdist::perplexity(traces);
    }
    if (!s.baseline.empty() && !reports.contains(s.baseline))
        throw UsageError(fmt::format("baseline '{}' is not among the trace labels", s.baseline));
    for (const auto& g : groups)
        for (const auto& [source, r] : reports[g.label]) {
            std::string abs_delta, rel_delta;
            if (!s.baseline.empty() && g.label != s.baseline) {
                const auto& base = reports[s.baseline];
                if (auto it = base.find(source); it != base.end()) {
                    const auto d = probdist::perplexity_delta(it->second, r);
                    abs_delta = fmt::format("{}", d.absolute);
                    rel_delta = fmt::format("{}", d.relative);
                }
            }
            ppl.row("{},{},{},{},{},{}", g.label, corpus::to_string(source), r.token_count, r.ppl, abs_delta, rel_delta);
        }
    conc.save(out / "probdist.concentration.csv");
    summary.save(out / "probdist.summary.csv");
    ppl.save(out / "probdist.perplexity.csv");
}

// ---- shannon ----

void emit_shannon(const fs::path& out, const fs::path& input, const Settings& s, const Json& m) {
    require_file(input);
    const auto instances = shannon::load_instances(input);
    if (instances.empty()) throw UsageError(fmt::format("{}: no instances found", input.string()));
    const auto tie = s.tie == "inclusive" ? shannon::TieRule::inclusive : shannon::TieRule::strict;
    const auto gran = s.granularity == "string" ? shannon::Granularity::string : shannon::Granularity::token;
    const auto r = shannon::shannon_report(instances, tie, gran);
    ensure_dir(out);
    Csv csv(m, "instances,em,f1,avg_guesses");
    csv.row("{},{},{},{}", r.instances, r.em, r.f1, r.avg_guesses);
    csv.save(out / "shannon.csv");
}

// ---- probe ----

struct HiddenInput {
    std::string label;
    fs::path meta;
    fs::path matrix;
};

void emit_probe(const fs::path& out, const std::vector<HiddenInput>& inputs, const Settings& s, const Json& m) {
    ensure_dir(out);
    Csv csv(m, "label,n,train_pairs,validation_pairs,initial_loss,final_loss,accuracy");
    for (const auto& in : inputs) {
        require_file(in.meta);
        require_file(in.matrix);
        const auto h = corpus::load_hidden_states(in.meta, in.matrix);
        for (int n : s.offsets) {
            const auto ds = probe::build_probe_dataset(h, n, s.val_fraction, s.split_seed);
            const auto p = probe::train_probe(ds, s.train);
            const auto stem = fmt::format("{}.probe.n{}", file_stem(in.label), n);
            probe::save_probe(out / (stem + ".json"), out / (stem + ".f32"), p);
            csv.row("{},{},{},{},{},{},{}", in.label, n, ds.train.size(), ds.validation.size(), p.initial_loss,
                    p.final_loss, probe::probe_accuracy(p, ds));
        }
    }
    csv.save(out / "probe.accuracy.csv");
}

// ---- bellman ----

Json bellman_report(const Settings& s, const std::vector<std::string>& mdp_files) {
    Json results = Json::array();
    bool all = true;
    auto record = [&](Json id, const planner::Mdp& mdp) {
        const auto r = planner::verify_stochasticity_penalty(mdp, s.mdp_tol);
        all = all && r.holds;
        id["states"] = mdp.states;
        id["actions"] = mdp.actions;
        id["gamma"] = mdp.gamma;
        id["holds"] = r.holds;
        id["worst_gap"] = r.worst_gap;
        id["iterations"] = r.iterations;
        results.push_back(std::move(id));
    };
    for (const auto& f : mdp_files) {
        require_file(f);
        record({{"file", f}}, planner::load_mdp(f));
    }
    const auto mdps = parallel_map(s.mdp_count, s.jobs, [&](std::size_t i) {
        return planner::random_mdp(s.mdp_seed + i, s.mdp_max_states, s.mdp_max_actions);
    });
    for (std::size_t i = 0; i < mdps.size(); ++i) record({{"seed", s.mdp_seed + i}}, mdps[i]);
    return {{"holds", all}, {"count", results.size()}, {"results", results}};
}

// ---- report ----

struct ModelEntry {
    std::string label;
    std::optional<fs::path> generations;
    std::vector<fs::path> traces;
    std::optional<HiddenInput> hidden;
};

struct Manifest {
    std::vector<ModelEntry> models;
    std::optional<fs::path> shannon;
    bool bellman = false;
    std::string baseline;
};

Manifest load_manifest(const fs::path& path) {
    require_file(path);
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    Manifest m;
    try {
        std::ifstream in(path);
        const auto j = nlohmann::json::parse(in);
        for (const auto& e : j.at("models")) {
            ModelEntry me;
            me.label = e.at("label").get<std::string>();
            if (e.contains("generations")) me.generations = resolve(e["generations"].get<std::string>());
            if (e.contains("traces"))
                for (const auto& t : e["traces"]) me.traces.push_back(resolve(t.get<std::string>()));
            if (e.contains("hidden_states"))
                me.hidden = HiddenInput{me.label, resolve(e["hidden_states"].at("meta").get<std::string>()),
                                        resolve(e["hidden_states"].at("matrix").get<std::string>())};
            m.models.push_back(std::move(me));
        }
        if (j.contains("shannon")) m.shannon = resolve(j["shannon"].get<std::string>());
        m.bellman = j.value("bellman", false);
        m.baseline = j.value("baseline", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(fmt::format("{}: malformed manifest: {}", path.string(), e.what()));
    }
    if (m.models.empty()) throw UsageError(fmt::format("{}: manifest lists no models", path.string()));
    return m;
}

Json report_config(const Settings& s, const std::string& manifest) {
    Json j = {{"manifest", manifest}};
    j["anchors"] = anchor_config(s);
    j["ngrams"] = ngram_config(s);
    j["probdist"] = probdist_config(s);
    j["probe"] = probe_config(s);
    j["bellman"] = bellman_config(s);
    j["shannon"] = shannon_config(s);
    return j;
}

void run_report(const fs::path& manifest_path, const fs::path& out, Settings s) {
    const auto manifest = load_manifest(manifest_path);
    if (s.baseline.empty()) s.baseline = manifest.baseline;
    const Json m = meta("report", report_config(s, manifest_path.string()));
    ensure_dir(out);
    Json index = Json::array();

    std::vector<LabeledReport> ngram_reports;
    std::vector<TraceGroup> trace_groups;
    std::vector<HiddenInput> hidden;
    for (const auto& model : manifest.models) {
        if (model.generations) {
            const auto sets = load_sets(*model.generations, "");
            const auto dir = out / file_stem(model.label);
            emit_align(dir / "align", align_sets(sets, s), m);
            emit_anchors(dir / "anchors", anchor_sets(sets, s), m);
            ngram_reports.push_back(ngram_for(sets, model.label, s));
            index.push_back({{"label", model.label}, {"analysis", "align"}, {"prompts", sets.size()}});
            index.push_back({{"label", model.label}, {"analysis", "anchors"}, {"prompts", sets.size()}});
        }
        if (!model.traces.empty()) {
            TraceGroup g{model.label, {}};
            for (const auto& t : model.traces) {
                require_file(t);
                g.traces.push_back(corpus::load_trace(t));
            }
            trace_groups.push_back(std::move(g));
            index.push_back({{"label", model.label}, {"analysis", "probdist"}, {"traces", model.traces.size()}});
        }
        if (model.hidden) {
            hidden.push_back(*model.hidden);
            index.push_back({{"label", model.label}, {"analysis", "probe"}});
        }
    }
    if (!ngram_reports.empty()) emit_ngrams(out, ngram_reports, s, m);
    if (!trace_groups.empty()) emit_probdist(out, trace_groups, s, m);
    if (!hidden.empty()) emit_probe(out, hidden, s, m);
    if (manifest.shannon) {
        emit_shannon(out, *manifest.shannon, s, m);
        index.push_back({{"analysis", "shannon"}});
    }
    if (manifest.bellman) {
        Json b = bellman_report(s, {});
        b["meta"] = m;
        write_json(out / "bellman.json", b);
        index.push_back({{"analysis", "bellman"}});
    }
    write_json(out / "report.json", {{"meta", m}, {"analyses", index}});
}

// ---- flag registration ----

void add_align_flags(CLI::App* c, Settings& s) {
    c->add_option("--match", s.msa.scheme.match, "Score of identical characters")->capture_default_str();
    c->add_option("--mismatch", s.msa.scheme.mismatch, "Score of differing characters")->capture_default_str();
    c->add_option("--gap-open", s.msa.scheme.gap_open, "Score of a length-1 gap")->capture_default_str();
    c->add_option("--gap-extend", s.msa.scheme.gap_extend, "Score of each further gap position")
        ->capture_default_str();
    c->add_option("--kmer", s.msa.kmer, "k-mer length for guide-tree distances")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    c->add_option("--length-cap", s.msa.length_cap, "Maximum generation length in characters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--overlap-metric", s.overlap_metric, "pairwise_match or aligned_with_at_least_5")
        ->check(CLI::IsMember({"pairwise_match", "aligned_with_at_least_5"}))
        ->capture_default_str();
    c->add_option("--overlap-min-support", s.overlap.min_support,
                  "Drop columns with fewer non-gap generations than this")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    c->add_option("--overlap-sigma", s.overlap.sigma, "Gaussian smoothing width in buckets")
        ->check(CLI::Range(0.0, 100.0))
        ->capture_default_str();
}

void add_anchor_flags(CLI::App* c, Settings& s) {
    c->add_option("--anchor-min-chars", s.anchor.min_length, "Minimum anchor length in characters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--anchor-threshold", s.anchor.threshold, "Minimum fraction of generations sharing an anchor")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    c->add_option("--anchor-max-spans", s.anchor.max_spans, "Maximum number of anchors per prompt")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_ngram_flags(CLI::App* c, Settings& s) {
    c->add_option("--support-n", s.ngram.support_ns, "n values for most-common n-gram support")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--unique-n", s.ngram.unique_ns, "n values for unique n-gram fraction")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--histogram-n", s.ngram.histogram_n, "n for the sharing histogram")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_probdist_flags(CLI::App* c, Settings& s) {
    c->add_option("--max-rank", s.max_rank, "Largest rank K of the concentration curve")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--baseline", s.baseline, "Label that perplexity deltas are measured against");
}

void add_probe_flags(CLI::App* c, Settings& s) {
    c->add_option("--offsets", s.offsets, "Token offsets n to probe")
        ->delimiter(',')
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c->add_option("--epochs", s.train.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--lr", s.train.lr, "SGD learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--batch", s.train.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--probe-seed", s.train.seed, "Shuffling seed")->capture_default_str();
    c->add_option("--val-fraction", s.val_fraction, "Held-out fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    c->add_option("--split-seed", s.split_seed, "Train/validation split seed")->capture_default_str();
}

void add_bellman_flags(CLI::App* c, Settings& s) {
    c->add_option("--seed", s.mdp_seed, "First random-MDP seed")->capture_default_str();
    c->add_option("--count", s.mdp_count, "Number of random MDPs")->capture_default_str();
    c->add_option("--max-states", s.mdp_max_states, "Random MDP state bound")
        ->check(CLI::Range(1, 1000))
        ->capture_default_str();
    c->add_option("--max-actions", s.mdp_max_actions, "Random MDP action bound")
        ->check(CLI::Range(1, 100))
        ->capture_default_str();
    c->add_option("--tol", s.mdp_tol, "Value-iteration tolerance")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_shannon_flags(CLI::App* c, Settings& s) {
    c->add_option("--tie", s.tie, "strict or inclusive")
        ->check(CLI::IsMember({"strict", "inclusive"}))
        ->capture_default_str();
    c->add_option("--granularity", s.granularity, "token or string")
        ->check(CLI::IsMember({"token", "string"}))
        ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Analyses of output diversity in sampled language-model generations", "blueprint"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags win");
    app.require_subcommand(1);
    app.fallthrough();

    Settings s;
    std::string in, prompt, out_dir, manifest, meta_path, matrix_path, label = "model";
    std::vector<std::string> inputs, traces, mdp_files;
    app.add_option("--jobs", s.jobs, "Prompts processed in parallel")->check(CLI::Range(1u, 256u))->capture_default_str();

    auto* align_cmd = app.add_subcommand("align", "Multiple alignment and overlap curves per prompt");
    align_cmd->add_option("--in", in, "Generation-set JSONL")->required();
    align_cmd->add_option("--prompt", prompt, "Only this prompt id");
    align_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_align_flags(align_cmd, s);

    auto* anchors_cmd = app.add_subcommand("anchors", "Anchor spans and Sankey graphs per prompt");
    anchors_cmd->add_option("--in", in, "Generation-set JSONL")->required();
    anchors_cmd->add_option("--prompt", prompt, "Only this prompt id");
    anchors_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_align_flags(anchors_cmd, s);
    add_anchor_flags(anchors_cmd, s);

    auto* ngrams_cmd = app.add_subcommand("ngrams", "N-gram sharing statistics per model");
    ngrams_cmd->add_option("--in", inputs, "Generation-set JSONL, one per model")->required();
    ngrams_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_ngram_flags(ngrams_cmd, s);

    auto* probdist_cmd = app.add_subcommand("probdist", "Concentration curves and perplexity");
    probdist_cmd->add_option("--trace", traces, "LABEL=PATH or PATH (label = file stem); repeatable")->required();
    probdist_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_probdist_flags(probdist_cmd, s);

    auto* shannon_cmd = app.add_subcommand("shannon", "Shannon-game metrics");
    shannon_cmd->add_option("--in", in, "Instance JSONL")->required();
    shannon_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_shannon_flags(shannon_cmd, s);

    auto* probe_cmd = app.add_subcommand("probe", "Linear probes predicting future tokens");
    probe_cmd->add_option("--meta", meta_path, "Hidden-state metadata JSON")->required();
    probe_cmd->add_option("--matrix", matrix_path, "Hidden-state float32 matrix")->required();
    probe_cmd->add_option("--label", label, "Label for the accuracy table")->capture_default_str();
    probe_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_probe_flags(probe_cmd, s);

    auto* bellman_cmd = app.add_subcommand("bellman", "Check that full control never lowers optimal values");
    bellman_cmd->add_option("--mdp", mdp_files, "MDP JSON files; repeatable");
    bellman_cmd->add_option("--out", out_dir, "Output directory (default: print to stdout)");
    add_bellman_flags(bellman_cmd, s);

    auto* report_cmd = app.add_subcommand("report", "Run every applicable analysis listed in a manifest");
    report_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
    report_cmd->add_option("--out", out_dir, "Output directory")->required();
    add_align_flags(report_cmd, s);
    add_anchor_flags(report_cmd, s);
    add_ngram_flags(report_cmd, s);
    add_probdist_flags(report_cmd, s);
    add_probe_flags(report_cmd, s);
    add_bellman_flags(report_cmd, s);
    add_shannon_flags(report_cmd, s);

    std::vector<const char*> argv{"blueprint"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        s.finalize();
        if (app.got_subcommand(align_cmd)) {
            const auto sets = load_sets(in, prompt);
            emit_align(out_dir, align_sets(sets, s), meta("align", Json{{"in", in}, {"prompt", prompt}, {"options", align_config(s)}}));
        } else if (app.got_subcommand(anchors_cmd)) {
            const auto sets = load_sets(in, prompt);
            emit_anchors(out_dir, anchor_sets(sets, s),
                         meta("anchors", Json{{"in", in}, {"prompt", prompt}, {"options", anchor_config(s)}}));
        } else if (app.got_subcommand(ngrams_cmd)) {
            std::vector<LabeledReport> reports;
            for (const auto& path : inputs) {
                const auto sets = load_sets(path, "");
                reports.push_back(ngram_for(sets, sets.front().model_label, s));
            }
            emit_ngrams(out_dir, reports, s, meta("ngrams", [&] {
                            Json j = ngram_config(s);
                            j["in"] = inputs;
                            return j;
                        }()));
        } else if (app.got_subcommand(probdist_cmd)) {
            std::vector<TraceGroup> groups;
            for (const auto& spec : traces) {
                const auto eq = spec.find('=');
                const fs::path path = eq == std::string::npos ? spec : spec.substr(eq + 1);
                const std::string name = eq == std::string::npos ? path.stem().string() : spec.substr(0, eq);
                require_file(path);
                auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.label == name; });
                if (it == groups.end()) it = groups.insert(groups.end(), TraceGroup{name, {}});
                it->traces.push_back(corpus::load_trace(path));
            }
            Json cfg = probdist_config(s);
            cfg["trace"] = traces;
            emit_probdist(out_dir, groups, s, meta("probdist", cfg));
        } else if (app.got_subcommand(shannon_cmd)) {
            Json cfg = shannon_config(s);
            cfg["in"] = in;
            emit_shannon(out_dir, in, s, meta("shannon", cfg));
        } else if (app.got_subcommand(probe_cmd)) {
            Json cfg = probe_config(s);
            cfg["meta"] = meta_path;
            cfg["matrix"] = matrix_path;
            emit_probe(out_dir, {{label, meta_path, matrix_path}}, s, meta("probe", cfg));
        } else if (app.got_subcommand(bellman_cmd)) {
            Json cfg = bellman_config(s);
            cfg["mdp"] = mdp_files;
            Json report = {{"meta", meta("bellman", cfg)}};
            report.update(bellman_report(s, mdp_files));
            if (out_dir.empty()) {
                out << report.dump(2) << "\n";
            } else {
                ensure_dir(out_dir);
                write_json(fs::path(out_dir) / "bellman.json", report);
            }
        } else if (app.got_subcommand(report_cmd)) {
            run_report(manifest, out_dir, s);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace blueprint::cli
