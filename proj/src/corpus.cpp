#include "blueprint/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace blueprint::corpus {

using nlohmann::json;

namespace {

constexpr double kSumTolerance = 1e-6;
constexpr double kLogprobSlack = 1e-9;

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("{}: cannot open file", path.string()));
    return in;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

// Returns a parsed JSON object or throws with the line number attached.
json parse_record(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(fmt::format("{}:{}: malformed record: {}", path.string(), lineno, e.what()));
    }
    if (!rec.is_object())
        throw Error(fmt::format("{}:{}: malformed record: expected a JSON object", path.string(), lineno));
    return rec;
}

template <typename T>
T field(const json& rec, const char* key, const std::filesystem::path& path, std::size_t lineno) {
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null())
        throw Error(fmt::format("{}:{}: malformed record: missing key '{}'", path.string(), lineno, key));
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(fmt::format("{}:{}: malformed record: bad type for '{}'", path.string(), lineno, key));
    }
}

template <typename T>
std::optional<T> optional_field(const json& rec, const char* key, const std::filesystem::path& path,
                                std::size_t lineno) {
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) return std::nullopt;
    return field<T>(rec, key, path, lineno);
}

struct PendingGeneration {
    std::optional<int> sample_index;
    Generation generation;
    std::size_t lineno = 0;
};

struct PendingSet {
    GenerationSet meta;
    std::vector<PendingGeneration> items;
};

GenerationSet finish(PendingSet&& pending, const std::filesystem::path& path) {
    GenerationSet gs = std::move(pending.meta);
    const auto n = pending.items.size();
    const auto with_index = std::count_if(pending.items.begin(), pending.items.end(),
                                          [](const PendingGeneration& p) { return p.sample_index.has_value(); });
    if (with_index != 0 && static_cast<std::size_t>(with_index) != n)
        throw Error(fmt::format("{}: prompt '{}': sample_index given for some records but not others",
                                path.string(), gs.prompt_id));

    gs.generations.resize(n);
    if (with_index == 0) {
        for (std::size_t k = 0; k < n; ++k) {
            gs.generations[k] = std::move(pending.items[k].generation);
            gs.generations[k].sample_index = static_cast<int>(k);
        }
    } else {
        std::vector<bool> seen(n, false);
        for (auto& item : pending.items) {
            const int idx = *item.sample_index;
            if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
                // A repeated index necessarily pushes another one out of range;
                // report the duplicate when that is what happened.
                for (const auto& other : pending.items)
                    if (&other != &item && other.sample_index == item.sample_index)
                        throw Error(fmt::format("{}:{}: duplicate sample_index {}", path.string(),
                                                item.lineno, idx));
                throw Error(fmt::format("{}:{}: sample_index {} out of range 0..{}", path.string(),
                                        item.lineno, idx, n - 1));
            }
            if (seen[idx])
                throw Error(fmt::format("{}:{}: duplicate sample_index {}", path.string(), item.lineno, idx));
            seen[idx] = true;
            item.generation.sample_index = idx;
            gs.generations[idx] = std::move(item.generation);
        }
    }
    validate(gs);
    return gs;
}

}  // namespace

std::string to_string(SamplingMethod m) {
    switch (m) {
        case SamplingMethod::nucleus: return "nucleus";
        case SamplingMethod::greedy: return "greedy";
        case SamplingMethod::other: return "other";
    }
    return "other";
}

SamplingMethod sampling_method_from_string(const std::string& s) {
    if (s == "nucleus") return SamplingMethod::nucleus;
    if (s == "greedy") return SamplingMethod::greedy;
    if (s == "other") return SamplingMethod::other;
    throw Error(fmt::format("unknown sampling_method '{}'", s));
}

void validate(const GenerationSet& gs) {
    if (gs.prompt_id.empty()) throw Error("generation set has an empty prompt_id");
    if (gs.generations.empty()) throw Error(fmt::format("prompt '{}': no generations", gs.prompt_id));
    if (gs.nucleus_p && !(*gs.nucleus_p > 0.0 && *gs.nucleus_p <= 1.0))
        throw Error(fmt::format("prompt '{}': nucleus_p {} outside (0,1]", gs.prompt_id, *gs.nucleus_p));
    for (std::size_t k = 0; k < gs.generations.size(); ++k) {
        const auto& g = gs.generations[k];
        if (g.sample_index != static_cast<int>(k))
            throw Error(fmt::format("prompt '{}': sample indices are not 0..N-1", gs.prompt_id));
        if (g.token_ids && g.token_ids->empty() && !g.text.empty())
            throw Error(fmt::format("prompt '{}': sample {} has text but an empty token_ids list",
                                    gs.prompt_id, k));
    }
}

std::vector<GenerationSet> load_generation_sets(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<PendingSet> pending;
    std::map<std::string, std::size_t> by_prompt;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        const json rec = parse_record(line, path, lineno);

        const auto prompt_id = field<std::string>(rec, "prompt_id", path, lineno);
        if (prompt_id.empty())
            throw Error(fmt::format("{}:{}: malformed record: empty prompt_id", path.string(), lineno));

        GenerationSet meta;
        meta.prompt_id = prompt_id;
        meta.prompt_text = optional_field<std::string>(rec, "prompt_text", path, lineno).value_or("");
        meta.model_label = optional_field<std::string>(rec, "model_label", path, lineno).value_or("");
        try {
            meta.sampling_method = sampling_method_from_string(
                optional_field<std::string>(rec, "sampling_method", path, lineno).value_or("other"));
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: malformed record: {}", path.string(), lineno, e.what()));
        }
        meta.nucleus_p = optional_field<double>(rec, "nucleus_p", path, lineno);

        PendingGeneration item;
        item.lineno = lineno;
        item.sample_index = optional_field<int>(rec, "sample_index", path, lineno);
        item.generation.text = field<std::string>(rec, "text", path, lineno);
        item.generation.token_ids = optional_field<std::vector<std::int64_t>>(rec, "token_ids", path, lineno);

        auto [it, inserted] = by_prompt.try_emplace(prompt_id, pending.size());
        if (inserted) {
            pending.push_back(PendingSet{std::move(meta), {}});
        } else {
            const auto& first = pending[it->second].meta;
            if (first.prompt_text != meta.prompt_text || first.model_label != meta.model_label ||
                first.sampling_method != meta.sampling_method || first.nucleus_p != meta.nucleus_p)
                throw Error(fmt::format("{}:{}: prompt '{}': metadata differs from earlier records",
                                        path.string(), lineno, prompt_id));
        }
        pending[it->second].items.push_back(std::move(item));
    }

    std::vector<GenerationSet> sets;
    sets.reserve(pending.size());
    for (auto& p : pending) sets.push_back(finish(std::move(p), path));
    return sets;
}

GenerationSet load_generation_set(const std::filesystem::path& path) {
    auto sets = load_generation_sets(path);
    if (sets.empty()) throw Error(fmt::format("{}: empty file", path.string()));
    if (sets.size() > 1)
        throw Error(fmt::format("{}: expected one prompt, found {}", path.string(), sets.size()));
    return std::move(sets.front());
}

void write_generation_sets(const std::filesystem::path& path, std::span<const GenerationSet> sets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
    for (const auto& gs : sets) {
        for (const auto& g : gs.generations) {
            json rec = {
                {"prompt_id", gs.prompt_id},
                {"prompt_text", gs.prompt_text},
                {"model_label", gs.model_label},
                {"sampling_method", to_string(gs.sampling_method)},
                {"nucleus_p", gs.nucleus_p ? json(*gs.nucleus_p) : json(nullptr)},
                {"sample_index", g.sample_index},
                {"text", g.text},
            };
            if (g.token_ids) rec["token_ids"] = *g.token_ids;
            out << rec.dump() << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

std::string to_string(TraceSource s) { return s == TraceSource::gold ? "gold" : "self_generated"; }

TraceSource trace_source_from_string(const std::string& s) {
    if (s == "gold") return TraceSource::gold;
    if (s == "self_generated") return TraceSource::self_generated;
    throw Error(fmt::format("unknown trace source '{}'", s));
}

void validate(const TraceStep& step, std::int64_t vocab_size) {
    if (step.sorted_probs.empty()) throw Error("sorted_probs is empty");
    if (static_cast<std::int64_t>(step.sorted_probs.size()) > vocab_size)
        throw Error("sorted_probs longer than vocab_size");
    for (std::size_t i = 0; i < step.sorted_probs.size(); ++i) {
        const double p = step.sorted_probs[i];
        if (!std::isfinite(p) || p < 0.0) throw Error("sorted_probs holds a negative or non-finite value");
        if (i > 0 && p > step.sorted_probs[i - 1]) throw Error("sorted_probs is not non-increasing");
    }
    if (!std::isfinite(step.tail_mass) || step.tail_mass < 0.0) throw Error("tail_mass is negative");
    const double total = std::accumulate(step.sorted_probs.begin(), step.sorted_probs.end(), 0.0) + step.tail_mass;
    if (std::abs(total - 1.0) > kSumTolerance)
        throw Error(fmt::format("probability sum out of tolerance ({:.9g})", total));
    if (std::isnan(step.realized_logprob) || step.realized_logprob > 0.0 ||
        std::exp(step.realized_logprob) > step.sorted_probs.front() + kLogprobSlack)
        throw Error("realized_logprob exceeds the top probability");
    if (step.realized_token < 0 || step.realized_token >= vocab_size)
        throw Error("realized_token out of range");
    if (step.nonnegligible_count < 1 || step.nonnegligible_count > vocab_size)
        throw Error("nonnegligible_count out of range");
}

void validate(const DistributionTrace& trace) {
    if (trace.vocab_size < 1) throw Error("vocab_size must be positive");
    if (trace.steps.empty()) throw Error("trace has no steps");
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        try {
            validate(trace.steps[t], trace.vocab_size);
        } catch (const Error& e) {
            throw Error(fmt::format("step {}: {}", t, e.what()));
        }
    }
}

DistributionTrace load_trace(const std::filesystem::path& path) {
    auto in = open_input(path);
    DistributionTrace trace;
    bool have_header = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) continue;
        const json rec = parse_record(line, path, lineno);
        if (!have_header) {
            trace.vocab_size = field<std::int64_t>(rec, "vocab_size", path, lineno);
            try {
                trace.source = trace_source_from_string(field<std::string>(rec, "source", path, lineno));
            } catch (const Error& e) {
                throw Error(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
            }
            if (trace.vocab_size < 1)
                throw Error(fmt::format("{}:{}: vocab_size must be positive", path.string(), lineno));
            have_header = true;
            continue;
        }
        TraceStep step;
        if (auto s = optional_field<std::int64_t>(rec, "step", path, lineno);
            s && *s != static_cast<std::int64_t>(trace.steps.size()))
            throw Error(fmt::format("{}:{}: step {} out of order", path.string(), lineno, *s));
        step.realized_token = field<std::int64_t>(rec, "realized_token", path, lineno);
        step.realized_logprob = field<double>(rec, "realized_logprob", path, lineno);
        step.sorted_probs = field<std::vector<double>>(rec, "sorted_probs", path, lineno);
        step.tail_mass = field<double>(rec, "tail_mass", path, lineno);
        step.nonnegligible_count = field<std::int64_t>(rec, "nonnegligible_count", path, lineno);
        try {
            validate(step, trace.vocab_size);
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
        trace.steps.push_back(std::move(step));
    }
    if (!have_header) throw Error(fmt::format("{}: empty file", path.string()));
    if (trace.steps.empty()) throw Error(fmt::format("{}: trace has no steps", path.string()));
    return trace;
}

void write_trace(const std::filesystem::path& path, const DistributionTrace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
    out << json{{"vocab_size", trace.vocab_size}, {"source", to_string(trace.source)}}.dump() << '\n';
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& s = trace.steps[t];
        out << json{{"step", t},
                    {"realized_token", s.realized_token},
                    {"realized_logprob", s.realized_logprob},
                    {"sorted_probs", s.sorted_probs},
                    {"tail_mass", s.tail_mass},
                    {"nonnegligible_count", s.nonnegligible_count}}
                   .dump()
            << '\n';
    }
}

TraceStep make_step(std::span<const double> full_distribution, std::int64_t realized_token, double floor) {
    if (realized_token < 0 || static_cast<std::size_t>(realized_token) >= full_distribution.size())
        throw Error("realized_token out of range");
    std::vector<double> sorted(full_distribution.begin(), full_distribution.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    TraceStep step;
    step.realized_token = realized_token;
    step.realized_logprob = std::log(full_distribution[static_cast<std::size_t>(realized_token)]);
    step.nonnegligible_count = std::count_if(sorted.begin(), sorted.end(),
                                             [](double p) { return p > kNonNegligibleThreshold; });
    auto cut = std::find_if(sorted.begin(), sorted.end(), [floor](double p) { return p < floor; });
    if (cut == sorted.begin()) ++cut;  // always keep the top entry
    step.tail_mass = std::accumulate(cut, sorted.end(), 0.0);
    sorted.erase(cut, sorted.end());
    step.sorted_probs = std::move(sorted);
    return step;
}

// ---------------------------------------------------------------------------

std::vector<float> read_f32_le(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0)
        throw Error(fmt::format("{}: size mismatch: {} bytes is not a whole number of float32 values",
                                path.string(), bytes.size()));
    std::vector<float> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t u;
        std::memcpy(&u, bytes.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        values[i] = std::bit_cast<float>(u);
    }
    return values;
}

void write_f32_le(const std::filesystem::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
    for (float v : values) {
        auto u = std::bit_cast<std::uint32_t>(v);
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        char buf[4];
        std::memcpy(buf, &u, 4);
        out.write(buf, 4);
    }
}

void validate(const HiddenStateDataset& h) {
    if (h.hidden_dim == 0) throw Error("hidden_dim must be positive");
    if (h.vocab_size < 1) throw Error("vocab_size must be positive");
    if (!h.rows || h.rows->size() != h.token_ids.size() * h.hidden_dim)
        throw Error("size mismatch between rows and token_ids");
    for (auto id : h.token_ids)
        if (id < 0 || id >= h.vocab_size) throw Error(fmt::format("token id {} out of range [0, {})", id, h.vocab_size));
}

HiddenStateDataset load_hidden_states(const std::filesystem::path& meta_path,
                                      const std::filesystem::path& matrix_path) {
    auto in = open_input(meta_path);
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(fmt::format("{}: malformed metadata: {}", meta_path.string(), e.what()));
    }
    HiddenStateDataset h;
    std::size_t count = 0;
    try {
        count = meta.at("T").get<std::size_t>();
        h.hidden_dim = meta.at("d").get<std::size_t>();
        h.vocab_size = meta.at("V").get<std::int64_t>();
        h.layer_index = meta.at("layer_index").get<int>();
        h.token_ids = meta.at("token_ids").get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
        throw Error(fmt::format("{}: malformed metadata: {}", meta_path.string(), e.what()));
    }
    if (h.token_ids.size() != count)
        throw Error(fmt::format("{}: token_ids has {} entries but T = {}", meta_path.string(),
                                h.token_ids.size(), count));

    const auto expected = count * h.hidden_dim * 4;
    const auto actual = std::filesystem::file_size(matrix_path);
    if (actual != expected)
        throw Error(fmt::format("{}: size mismatch: expected {} bytes for T={} d={}, found {}",
                                matrix_path.string(), expected, count, h.hidden_dim, actual));
    h.rows = std::make_shared<const std::vector<float>>(read_f32_le(matrix_path));
    try {
        validate(h);
    } catch (const Error& e) {
        throw Error(fmt::format("{}: {}", meta_path.string(), e.what()));
    }
    if (count > 0) {
        for (std::size_t t : {std::size_t{0}, count - 1})
            for (float v : h.row(t))
                if (!std::isfinite(v))
                    throw Error(fmt::format("{}: non-finite value in row {}", matrix_path.string(), t));
    }
    return h;
}

void write_hidden_states(const std::filesystem::path& meta_path, const std::filesystem::path& matrix_path,
                         const HiddenStateDataset& h) {
    validate(h);
    std::ofstream out(meta_path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", meta_path.string()));
    out << json{{"T", h.size()},
                {"d", h.hidden_dim},
                {"V", h.vocab_size},
                {"layer_index", h.layer_index},
                {"token_ids", h.token_ids}}
               .dump()
        << '\n';
    write_f32_le(matrix_path, *h.rows);
}

}  // namespace blueprint::corpus
