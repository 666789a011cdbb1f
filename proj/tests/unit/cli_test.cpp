#include <doctest.h>

#include <httplib.h>

#include <algorithm>
#include <random>
#include <set>
#include <thread>

#include "curate/corpus_store.hpp"
#include "curate/rater_gateway.hpp"
#include "curate/sampler.hpp"
#include "test_support.hpp"

using namespace curate;
namespace fs = std::filesystem;

namespace {

const std::string kBin = CURATE_BIN;

std::string q(const std::string& s) { return "'" + s + "'"; }

/// Raw corpus with `n` documents of varying length across two sources.
void write_raw(const testing::TempDir& dir, int n) {
  std::mt19937_64 rng(n);
  for (const std::string source : {"web", "books"}) {
    std::ofstream out(dir.file(source + ".jsonl"));
    for (int i = 0; i < n / 2; ++i) {
      std::string text;
      const int words = 5 + static_cast<int>(rng() % 60);
      for (int w = 0; w < words; ++w) text += "w" + std::to_string(rng() % 1000) + (w % 9 == 8 ? ". " : " ");
      out << OrderedJson{{"id", source + "-" + std::to_string(i)}, {"text", text}}.dump() << '\n';
    }
  }
}

struct Pipeline {
  testing::TempDir dir{"cli"};
  std::string store() const { return dir.file("store"); }
  std::string annotations() const { return dir.file("ann/annotations.jsonl"); }

  explicit Pipeline(int n) {
    write_raw(dir, n);
    REQUIRE(testing::run(kBin + " ingest --input " + q(dir.file("web.jsonl")) + " " + q(dir.file("books.jsonl")) +
                         " --chunk-budget 32 --out " + q(store())) == 0);
    REQUIRE(testing::run(kBin + " annotate --mock --documents " + q(store()) + " --out " + q(dir.file("ann"))) == 0);
  }
};

std::vector<AnnotatedDocument> load(const Pipeline& p) {
  std::vector<Document> docs;
  read_documents(p.store(), [&](Document&& d) { docs.push_back(std::move(d)); });
  std::vector<AnnotationRecord> anns;
  read_annotations(p.annotations(), [&](AnnotationRecord&& r) { anns.push_back(std::move(r)); });
  return attach_annotations(std::move(docs), std::move(anns)).annotated;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes: usage errors return 2") {
    CHECK(testing::run(kBin) == 2);
    CHECK(testing::run(kBin + " ingest --out /tmp/x") == 2);
    CHECK(testing::run(kBin + " annotate --endpoint http://127.0.0.1:9 --mock --out /tmp/x") == 2);
    CHECK(testing::run(kBin + " annotate --out /tmp/x") == 2);
    CHECK(testing::run(kBin + " sample --budget-tokens 10 --strategy nonsense") == 2);
    CHECK(testing::run(kBin + " --workers 0 report --report summary") == 2);
    CHECK(testing::run(kBin + " bogus") == 2);
  }

  TEST_CASE("exit codes: runtime failure returns 1") {
    testing::TempDir dir("cli");
    CHECK(testing::run(kBin + " ingest --input /nonexistent/file.jsonl --out " + q(dir.file("s"))) == 1);
  }

  TEST_CASE("ingest: malformed lines are skipped and reported on stderr") {
    testing::TempDir dir("cli");
    testing::write_file(dir.file("raw.jsonl"), "{\"text\":\"a b c\"}\n{oops\n{\"text\":\"d e\"}\n");
    int status = 0;
    const auto err = testing::capture("{ " + kBin + " ingest --input " + q(dir.file("raw.jsonl")) + " --out " +
                                          q(dir.file("s")) + " 2>&1 >/dev/null; }",
                                      status);
    CHECK(status == 0);
    CHECK(err.find("\"skipped\":1") != std::string::npos);
    std::vector<Document> docs;
    read_documents(dir.file("s"), [&](Document&& d) { docs.push_back(std::move(d)); });
    CHECK(docs.size() == 2);
    CHECK(docs[0].source == "raw");
  }

  TEST_CASE("annotate: mock over ten documents") {
    testing::TempDir dir("cli");
    std::string raw;
    for (int i = 0; i < 10; ++i) raw += OrderedJson{{"text", "doc number " + std::to_string(i)}}.dump() + "\n";
    testing::write_file(dir.file("ten.jsonl"), raw);
    REQUIRE(testing::run(kBin + " ingest --input " + q(dir.file("ten.jsonl")) + " --out " + q(dir.file("s"))) == 0);
    REQUIRE(testing::run(kBin + " annotate --mock --documents " + q(dir.file("s")) + " --out " + q(dir.file("a"))) == 0);
    std::vector<AnnotationRecord> anns;
    const auto s = read_annotations(dir.file("a/annotations.jsonl"), [&](AnnotationRecord&& r) { anns.push_back(r); });
    CHECK(anns.size() == 10);
    CHECK(s.skipped == 0);
    CHECK(testing::read_file(dir.file("a/failures.jsonl")).empty());
  }

  TEST_CASE("annotate: stub endpoint with one parse failure") {
    testing::TempDir dir("cli");
    std::string raw;
    for (int i = 0; i < 10; ++i) raw += OrderedJson{{"id", "e" + std::to_string(i)}, {"text", "text " + std::to_string(i)}}.dump() + "\n";
    testing::write_file(dir.file("e.jsonl"), raw);
    REQUIRE(testing::run(kBin + " ingest --input " + q(dir.file("e.jsonl")) + " --out " + q(dir.file("s"))) == 0);

    httplib::Server server;
    server.Post("/v1/rate", [](const httplib::Request& req, httplib::Response& res) {
      const auto j = Json::parse(req.body);
      const std::string id = j["id"];
      const std::string output = id == "e3#0" ? "no idea"
                                              : render_rater_output(testing::uniform_record(id, 4, DomainType::kLaw),
                                                                    OutputDialect::kFlat);
      res.set_content(Json{{"id", id}, {"output", output}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const int rc = testing::run(kBin + " annotate --endpoint http://127.0.0.1:" + std::to_string(port) +
                                " --documents " + q(dir.file("s")) + " --out " + q(dir.file("a")));
    server.stop();
    t.join();
    CHECK(rc == 0);
    std::vector<AnnotationRecord> anns;
    read_annotations(dir.file("a/annotations.jsonl"), [&](AnnotationRecord&& r) { anns.push_back(r); });
    CHECK(anns.size() == 9);
    const auto failures = testing::read_file(dir.file("a/failures.jsonl"));
    CHECK(std::count(failures.begin(), failures.end(), '\n') == 1);
    CHECK(failures.find("e3#0") != std::string::npos);
    CHECK(failures.find("parse") != std::string::npos);
  }

  TEST_CASE("sample: fixed level keeps only level-5 documents") {
    Pipeline p(400);
    int status = 0;
    const std::string flags = "--strategy fixed-level --level 5 --budget-tokens 800";
    testing::capture(kBin + " sample " + flags + " --documents " + q(p.store()) + " --annotations " +
                         q(p.annotations()) + " --out " + q(p.dir.file("fixed.jsonl")),
                     status);
    REQUIRE(status == 0);
    const auto m = read_manifest(p.dir.file("fixed.jsonl"));
    REQUIRE_FALSE(m.rows.empty());
    for (const auto& r : m.rows) CHECK(r.overall_score == 5);
  }

  TEST_CASE("sample: temperature zero equals a top-k reference") {
    Pipeline p(400);
    int status = 0;
    const std::string out = testing::capture(
        kBin + " sample --strategy temperature --tau 0 --stratify none --budget-tokens 1500 --documents " +
            q(p.store()) + " --annotations " + q(p.annotations()) + " --out " + q(p.dir.file("t.jsonl")),
        status);
    REQUIRE(status == 0);
    const auto m = read_manifest(p.dir.file("t.jsonl"));
    CHECK(out.substr(0, out.find('\n')) == m.digest);

    auto corpus = load(p);
    std::sort(corpus.begin(), corpus.end(), [](const AnnotatedDocument& a, const AnnotatedDocument& b) {
      const int la = a.annotation.level(Criterion::kOverallScore), lb = b.annotation.level(Criterion::kOverallScore);
      if (la != lb) return la > lb;
      return a.doc.id < b.doc.id;
    });
    std::set<std::string> want;
    std::int64_t tokens = 0;
    for (const auto& d : corpus) {
      if (tokens >= 1500) break;
      want.insert(d.doc.id);
      tokens += d.doc.token_count;
    }
    const auto got = m.doc_ids();
    CHECK(std::set<std::string>(got.begin(), got.end()) == want);
    CHECK(m.total_tokens == tokens);

    const auto units = make_units(load(p));
    SampleSpec spec = m.spec;
    CHECK(sample(units, spec, estimate_joint(units)).digest == m.digest);
  }

  TEST_CASE("sample: digests are identical for one and eight workers") {
    Pipeline p(600);
    for (const std::string strategy :
         {"--strategy criterion-weighted --criterion coherence", "--strategy uniform", "--strategy temperature --tau 2"}) {
      int s1 = 0, s8 = 0;
      const auto flags = " sample " + strategy + " --budget-tokens 3000 --seed 17 --documents " + q(p.store()) +
                         " --annotations " + q(p.annotations());
      const auto d1 = testing::capture(kBin + " --workers 1" + flags + " --out " + q(p.dir.file("w1.jsonl")), s1);
      const auto d8 = testing::capture(kBin + " --workers 8" + flags + " --out " + q(p.dir.file("w8.jsonl")), s8);
      CHECK(s1 == 0);
      CHECK(s8 == 0);
      CHECK(d1.size() > 60);
      CHECK(d1 == d8);
      CHECK(read_manifest(p.dir.file("w1.jsonl")).digest == read_manifest(p.dir.file("w8.jsonl")).digest);
    }
  }

  TEST_CASE("sample: merge, config file precedence and dry run") {
    Pipeline p(300);
    const auto base = " --documents " + q(p.store()) + " --annotations " + q(p.annotations());
    int s = 0;
    testing::capture(kBin + " sample --strategy uniform --budget-tokens 500 --seed 1" + base + " --out " +
                         q(p.dir.file("a.jsonl")),
                     s);
    REQUIRE(s == 0);
    testing::capture(kBin + " sample --strategy fixed-level --level 4 --budget-tokens 500 --seed 2" + base +
                         " --out " + q(p.dir.file("b.jsonl")),
                     s);
    REQUIRE(s == 0);
    testing::capture(kBin + " sample --merge " + q(p.dir.file("a.jsonl")) + " " + q(p.dir.file("b.jsonl")) +
                         " --budget-tokens 600 --seed 3 --out " + q(p.dir.file("merged.jsonl")),
                     s);
    REQUIRE(s == 0);
    const auto merged = read_manifest(p.dir.file("merged.jsonl"));
    CHECK(merged.total_tokens >= 600);
    const auto ids = merged.doc_ids();
    CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == ids.size());

    testing::write_file(p.dir.file("cfg.json"),
                        R"({"sample": {"strategy": "temperature", "tau": 5.0, "budget-tokens": 400, "seed": 9}})");
    const auto via_config = testing::capture(kBin + " --config " + q(p.dir.file("cfg.json")) + " sample --tau 0 --stratify none" +
                                                 base + " --out " + q(p.dir.file("c.jsonl")),
                                             s);
    REQUIRE(s == 0);
    const auto cm = read_manifest(p.dir.file("c.jsonl"));
    const auto* t = std::get_if<strategy::Temperature>(&cm.spec.strategy);
    REQUIRE(t != nullptr);
    CHECK(t->tau == 0.0);
    CHECK(cm.spec.token_budget == 400);
    CHECK(cm.seed == 9);

    const auto plan = testing::capture(kBin + " --dry-run sample --strategy uniform --budget-tokens 500" + base, s);
    CHECK(s == 0);
    CHECK(plan.find("\"strata\"") != std::string::npos);
  }

  TEST_CASE("report: distribution, accuracy, anomalies, summary, curation") {
    Pipeline p(300);
    const auto base = " --documents " + q(p.store()) + " --annotations " + q(p.annotations());
    int s = 0;
    auto j = Json::parse(testing::capture(kBin + " report --report distribution" + base, s));
    CHECK(s == 0);
    CHECK(j["payload"].contains("sources"));
    CHECK(j["provenance"].contains("input_digests"));

    j = Json::parse(testing::capture(kBin + " report --report summary" + base, s));
    CHECK(s == 0);

    j = Json::parse(testing::capture(kBin + " report --report accuracy --gold " + q(p.annotations()) + " --pred " +
                                         q(p.annotations()),
                                     s));
    CHECK(s == 0);
    CHECK(j["payload"]["five_level_acc"] == 1.0);

    // Anomalies need nll, which ingest does not produce; attach synthetic values.
    std::vector<Document> docs;
    read_documents(p.store(), [&](Document&& d) { docs.push_back(std::move(d)); });
    std::string lines;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      docs[i].nll = 0.01 * static_cast<double>((i * 37) % docs.size());
      lines += to_json(docs[i]).dump() + "\n";
    }
    testing::write_file(p.dir.file("with_nll.jsonl"), lines);
    j = Json::parse(testing::capture(kBin + " report --report anomalies --fraction 0.02 --documents " +
                                         q(p.dir.file("with_nll.jsonl")) + " --prompts-dir " + q(p.dir.file("prompts")),
                                     s));
    CHECK(s == 0);
    const auto& sets = j["payload"]["sets"];
    REQUIRE(sets.size() == 2);
    for (const auto& set : sets) {
      const double n = set["n"].get<double>();
      CHECK(set["high"].size() == static_cast<std::size_t>(std::ceil(0.02 * n)));
    }
    CHECK(fs::exists(p.dir.file("prompts")));

    j = Json::parse(testing::capture(kBin + " report --report curation" + base, s));
    CHECK(s == 0);
    const auto csv = testing::capture(kBin + " report --report distribution --format csv" + base, s);
    CHECK(s == 0);
    CHECK(csv.find(',') != std::string::npos);
  }

  TEST_CASE("finetune: split then upsample the train split") {
    Pipeline p(300);
    int s = 0;
    testing::capture(kBin + " finetune --documents " + q(p.store()) + " --annotations " + q(p.annotations()) +
                         " --out " + q(p.dir.file("ft")),
                     s);
    REQUIRE(s == 0);
    for (const std::string part : {"train", "val", "test"}) {
      CHECK(fs::exists(p.dir.file("ft/" + part + "/documents.jsonl")));
      CHECK(fs::exists(p.dir.file("ft/" + part + "/annotations.jsonl")));
    }
    std::vector<AnnotationRecord> val;
    read_annotations(p.dir.file("ft/val/annotations.jsonl"), [&](AnnotationRecord&& r) { val.push_back(r); });
    for (const auto& r : val) CHECK(r.doc_id.find("~r") == std::string::npos);
  }
}
