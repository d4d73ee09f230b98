#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blueprint/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using blueprint::cli::run;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fx(const char* name) { return testutil::fixture(name).string(); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testutil::read_file(p)); }

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = testutil::read_file(e.path());
    return files;
}

}  // namespace

TEST_CASE("anchors for one prompt") {
    const auto dir = testutil::scratch_dir("cli_anchors");
    const auto r = invoke({"anchors", "--in", fx("rlhf_like.jsonl"), "--prompt", "p0", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto anchors = read_json(dir / "p0.anchors.json");
    const auto sankey = read_json(dir / "p0.sankey.json");
    CHECK(anchors["prompt_id"] == "p0");
    CHECK(anchors["spans"].size() >= 1);
    CHECK(anchors["meta"]["tool"] == "blueprint");
    CHECK(anchors["meta"]["command"] == "anchors");
    CHECK(anchors["meta"]["config"]["options"]["anchor_min_chars"] == 30);
    CHECK(sankey["nodes"].front()["label"] == "SOURCE");
    CHECK(sankey["nodes"].back()["label"] == "SINK");
    std::size_t from_source = 0;
    for (const auto& l : sankey["links"])
        if (l["source"] == 0) from_source += l["value"].get<std::size_t>();
    CHECK(from_source == 100);
    CHECK(fs::exists(dir / "p0.sankey.svg"));
    CHECK(!fs::exists(dir / "p1.anchors.json"));
}

TEST_CASE("anchor flags reach the extraction") {
    const auto dir = testutil::scratch_dir("cli_anchor_flags");
    REQUIRE(invoke({"anchors", "--in", fx("rlhf_small.jsonl"), "--prompt", "p1", "--anchor-max-spans", "1", "--out",
                    dir.string()})
                .code == 0);
    CHECK(read_json(dir / "p1.anchors.json")["spans"].size() == 1);
}

TEST_CASE("bellman to stdout") {
    const auto r = invoke({"bellman", "--seed", "1", "--count", "10"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["holds"] == true);
    CHECK(j["count"] == 10);
    CHECK(j["results"].size() == 10);
    for (const auto& m : j["results"]) CHECK(m["holds"] == true);
}

TEST_CASE("bellman on a file") {
    const auto r = invoke({"bellman", "--count", "0", "--mdp", fx("mdp.json")});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(nlohmann::json::parse(r.out)["holds"] == true);
}

TEST_CASE("empty input is a usage error") {
    const auto dir = testutil::scratch_dir("cli_empty");
    const auto r = invoke({"align", "--in", fx("empty.jsonl"), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("no generation sets found") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"align"}).code == 2);
    CHECK(invoke({"align", "--in", "/nonexistent/x.jsonl", "--out", "/tmp/x"}).code == 2);
    const auto dir = testutil::scratch_dir("cli_usage");
    const auto missing = invoke({"anchors", "--in", fx("rlhf_small.jsonl"), "--prompt", "nope", "--out", dir.string()});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("not found") != std::string::npos);
    CHECK(invoke({"bellman", "--tol", "-1"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("analysis failures exit 1 with file context") {
    const auto dir = testutil::scratch_dir("cli_bad");
    testutil::write_file(dir / "bad.jsonl", "{\"prompt_id\": \"p\", \"sample_index\": 0}\nnot json\n");
    const auto r = invoke({"align", "--in", (dir / "bad.jsonl").string(), "--out", (dir / "out").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("bad.jsonl") != std::string::npos);

    testutil::write_file(dir / "mdp.json", R"({"S": 1, "A": 1, "gamma": 1.5, "R": [[1]], "P": [[[1]]]})");
    const auto m = invoke({"bellman", "--count", "0", "--mdp", (dir / "mdp.json").string()});
    CHECK(m.code == 1);
    CHECK(m.err.find("mdp.json") != std::string::npos);
}

TEST_CASE("align outputs") {
    const auto dir = testutil::scratch_dir("cli_align");
    REQUIRE(invoke({"align", "--in", fx("rlhf_small.jsonl"), "--out", dir.string()}).code == 0);
    for (const char* name : {"p0.msa.txt", "p0.overlap.csv", "p2.overlap.csv", "overlap_mean.csv", "align.run.json"})
        CHECK_MESSAGE(fs::exists(dir / name), name);
    const auto csv = testutil::read_file(dir / "overlap_mean.csv");
    CHECK(csv.rfind("# {", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 102);
    const auto run_json = read_json(dir / "align.run.json");
    CHECK(run_json["prompts"][0]["rows"] == 100);
}

TEST_CASE("ngrams, probdist, shannon and probe tables") {
    const auto dir = testutil::scratch_dir("cli_tables");
    auto r = invoke({"ngrams", "--in", fx("rlhf_small.jsonl"), "--in", fx("base_small.jsonl"), "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto support = testutil::read_file(dir / "ngrams.max_support.csv");
    CHECK(support.find("rlhf_like,10,") != std::string::npos);
    CHECK(support.find("base_like,10,") != std::string::npos);

    r = invoke({"probdist", "--trace", "rlhf=" + fx("rlhf_gold.trace.jsonl"), "--trace",
                "base=" + fx("base_gold.trace.jsonl"), "--baseline", "base", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto ppl = testutil::read_file(dir / "probdist.perplexity.csv");
    const auto row = ppl.find("\nrlhf,gold,50,");
    REQUIRE(row != std::string::npos);
    std::istringstream fields(ppl.substr(row + 14));
    double value = 0, delta = 0, relative = 0;
    char comma = 0;
    fields >> value >> comma >> delta >> comma >> relative;
    CHECK(value == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(delta == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(relative == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(invoke({"probdist", "--trace", fx("base_gold.trace.jsonl"), "--baseline", "zzz", "--out", dir.string()}).code ==
          2);

    r = invoke({"shannon", "--in", fx("shannon.jsonl"), "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir / "shannon.csv"));

    r = invoke({"probe", "--meta", fx("hidden_low.meta.json"), "--matrix", fx("hidden_low.f32"), "--label", "low",
                "--offsets", "1,2", "--epochs", "2", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir / "low.probe.n1.json"));
    CHECK(fs::exists(dir / "low.probe.n2.f32"));
    CHECK(!fs::exists(dir / "low.probe.n3.json"));
}

TEST_CASE("config files set defaults and flags win") {
    const auto dir = testutil::scratch_dir("cli_config");
    testutil::write_file(dir / "cfg.toml", "[bellman]\ncount = 3\nseed = 5\n");
    auto r = invoke({"--config", (dir / "cfg.toml").string(), "bellman"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(nlohmann::json::parse(r.out)["count"] == 3);
    r = invoke({"--config", (dir / "cfg.toml").string(), "bellman", "--count", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(nlohmann::json::parse(r.out)["count"] == 2);
}

TEST_CASE("report output is byte-identical across runs and job counts") {
    const auto a = testutil::scratch_dir("cli_report_a");
    const auto b = testutil::scratch_dir("cli_report_b");
    auto r = invoke({"report", "--manifest", fx("manifest.json"), "--out", a.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = invoke({"--jobs", "3", "report", "--manifest", fx("manifest.json"), "--out", b.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto ta = tree(a), tb = tree(b);
    CHECK(ta.size() > 20);
    CHECK(ta.count("report.json") == 1);
    CHECK(ta.count("rlhf_like/anchors/p0.sankey.json") == 1);
    CHECK(ta == tb);
}

TEST_CASE("the installed executable reports status codes") {
    const std::string exe = BLUEPRINT_EXE;
    const auto dir = testutil::scratch_dir("cli_exe");
    const auto quiet = " > " + (dir / "log").string() + " 2>&1";
    auto status = [](const std::string& cmd) {
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("\"" + exe + "\" bellman --count 2" + quiet) == 0);
    CHECK(status("\"" + exe + "\" align --in \"" + fx("empty.jsonl") + "\" --out \"" + dir.string() + "\"" + quiet) == 2);
    CHECK(testutil::read_file(dir / "log").find("no generation sets found") != std::string::npos);
}
