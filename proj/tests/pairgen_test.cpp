#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "vlrm/mockserver.hpp"
#include "vlrm/pairgen.hpp"

using namespace vlrm;

namespace {

EndpointConfig endpoint(const std::string& role, const std::string& base_url, const std::string& model) {
  EndpointConfig cfg;
  cfg.role = role;
  cfg.base_url = base_url;
  cfg.model = model;
  cfg.backoff_base_s = 0.005;
  return cfg;
}

std::map<std::string, EndpointConfig> pipeline_roles(const std::string& base_url) {
  return {{roles::kWeakVlm, endpoint(roles::kWeakVlm, base_url, "weak-1")},
          {roles::kStrongVlm, endpoint(roles::kStrongVlm, base_url, "strong-1")},
          {roles::kDetector, endpoint(roles::kDetector, base_url, "det-1")}};
}

ScriptEntry chat_entry(std::vector<std::string> keys, const std::string& text) {
  ScriptEntry e;
  e.keys = std::move(keys);
  e.text = text;
  return e;
}

ScriptEntry detect_entry(const std::string& uri, std::vector<std::pair<std::string, double>> objects) {
  ScriptEntry e;
  e.keys = {"detect|", "image=" + uri};
  json arr = json::array();
  for (auto& [label, conf] : objects) arr.push_back(json{{"label", label}, {"confidence", conf}});
  e.objects = arr;
  return e;
}

RawSample raw(const std::string& id, const std::string& uri, const std::string& query,
              const std::string& chosen) {
  RawSample s;
  s.id = id;
  s.image = {uri, "image/png"};
  s.query = query;
  s.chosen = chosen;
  return s;
}

}  // namespace

TEST_CASE("filter_hallucination set logic") {
  ObjectSet detected = ObjectSet::from_labels({"zebra", "rock", "grass"});

  FilterVerdict hallucinated = filter_hallucination(ObjectSet::from_labels({"deer"}), detected);
  CHECK(hallucinated.outcome == FilterOutcome::hallucinated_retain);
  CHECK(hallucinated.missing_labels == std::vector<std::string>{"deer"});

  FilterVerdict pass = filter_hallucination(ObjectSet::from_labels({"zebra"}),
                                            ObjectSet::from_labels({"zebra", "rock"}));
  CHECK(pass.outcome == FilterOutcome::pass_to_refinement);
  CHECK(pass.missing_labels.empty());

  FilterVerdict vacuous = filter_hallucination(ObjectSet{}, detected);
  CHECK(vacuous.outcome == FilterOutcome::pass_to_refinement);
}

TEST_CASE("filter_hallucination equals the containment oracle on random sets") {
  std::mt19937_64 rng(0xfeedULL);
  auto random_set = [&](int max_size) {
    ObjectSet set;
    int n = static_cast<int>(rng() % (max_size + 1));
    for (int i = 0; i < n; ++i) set.add("obj" + std::to_string(rng() % 12));
    return set;
  };
  for (int i = 0; i < 10000; ++i) {
    ObjectSet mentioned = random_set(6);
    ObjectSet detected = random_set(8);
    bool oracle_missing = false;
    for (const auto& m : mentioned.entries()) {
      if (!detected.contains(m.label)) oracle_missing = true;
    }
    FilterVerdict verdict = filter_hallucination(mentioned, detected);
    REQUIRE((verdict.outcome == FilterOutcome::hallucinated_retain) == oracle_missing);
    REQUIRE(verdict.missing_labels.empty() == !oracle_missing);
  }
}

TEST_CASE("synonym map enables mapped and head-noun matches") {
  ObjectSet detected = ObjectSet::from_labels({"horse", "grass"});
  SynonymMap synonyms{{"pony", "horse"}};

  CHECK(filter_hallucination(ObjectSet::from_labels({"pony"}), detected).outcome ==
        FilterOutcome::hallucinated_retain);
  CHECK(filter_hallucination(ObjectSet::from_labels({"pony"}), detected, &synonyms).outcome ==
        FilterOutcome::pass_to_refinement);

  // multiword mention matches via its head noun when a map is supplied
  ObjectSet multi = ObjectSet::from_labels({"green grass"});
  CHECK(filter_hallucination(multi, detected).outcome == FilterOutcome::hallucinated_retain);
  SynonymMap empty_map;
  CHECK(filter_hallucination(multi, detected, &empty_map).outcome == FilterOutcome::pass_to_refinement);
}

TEST_CASE("object-list replies parse into normalized sets") {
  auto parsed = PairGenerator::try_parse_object_list("Objects: a Zebra, rocks,  green grass");
  REQUIRE(parsed.has_value());
  CHECK(parsed->labels() == std::vector<std::string>{"a zebra", "rocks", "green grass"});

  CHECK(PairGenerator::try_parse_object_list("")->empty());
  CHECK(PairGenerator::try_parse_object_list("Objects: none")->empty());
  CHECK(PairGenerator::try_parse_object_list(R"(["a white car","street"])")->labels() ==
        std::vector<std::string>{"a white car", "street"});
  CHECK(!PairGenerator::try_parse_object_list("I see many things here.").has_value());
}

TEST_CASE("endpoint-backed pairgen operations") {
  Script script{{
      chat_entry({"model=weak-1", "img=img/zebra.png"},
                 "The image shows a deer standing in a dry field with green grass."),
      chat_entry({"model=weak-1", "img=img/empty.png"}, ""),
      chat_entry({"entities extractor", "Description: The image shows a deer standing"},
                 "Objects: deer, dry field, green grass"),
      chat_entry({"entities extractor", "Description: A zebra stands between rocks."},
                 "Objects: zebra, rocks"),
      chat_entry({"entities extractor", "Description: gibberish"}, "no list here"),
      detect_entry("img/zebra.png", {{"zebra", 0.97}, {"rock", 0.81}, {"grass", 0.66}}),
      chat_entry({"Detected Objects:", "Response: A zebra grazes."}, "Correct"),
      chat_entry({"Detected Objects:", "Response: A spaceship hovers."}, "Incorrect"),
      chat_entry({"Detected Objects:", "Response: mumble."}, "maybe"),
      chat_entry({"replace these objects", "Description: A zebra stands between rocks."},
                 "A bison stands between shrubs."),
  }};
  MockServer server(script);
  server.start();
  ModelGateway gateway(pipeline_roles(server.base_url()));
  PromptSet prompts;
  PairGenerator gen(gateway, prompts);

  SUBCASE("collect_negative returns the weak reply verbatim") {
    std::string text = gen.collect_negative(raw("s1", "img/zebra.png", "Describe the following image.", "x"));
    CHECK(text == "The image shows a deer standing in a dry field with green grass.");
    CHECK_THROWS_AS(gen.collect_negative(raw("s2", "img/empty.png", "Describe.", "x")), EmptyResponseError);
  }

  SUBCASE("extract_mentioned_objects normalizes the extractor list") {
    ObjectSet set = gen.extract_mentioned_objects("The image shows a deer standing in a dry field.");
    CHECK(set.labels() == std::vector<std::string>{"deer", "dry field", "green grass"});
    CHECK_THROWS_AS(gen.extract_mentioned_objects("gibberish"), ExtractionParseError);
  }

  SUBCASE("judge_false_rejection parses the one-word verdict") {
    ImageRef image{"img/zebra.png", "image/png"};
    ObjectSet detected = ObjectSet::from_labels({"zebra"});
    CHECK(gen.judge_false_rejection(image, "Q", "A zebra grazes.", detected) ==
          PairGenerator::RejectionJudgement::correct);
    CHECK(gen.judge_false_rejection(image, "Q", "A spaceship hovers.", detected) ==
          PairGenerator::RejectionJudgement::incorrect);
    CHECK_THROWS_AS(gen.judge_false_rejection(image, "Q", "mumble.", detected), JudgeParseError);
  }

  SUBCASE("alter_objects samples deterministically and verifies the rewrite") {
    ObjectSet mentioned = ObjectSet::from_labels({"zebra", "rocks"});
    auto first = gen.alter_objects("A zebra stands between rocks.", mentioned, 2, 7);
    auto second = gen.alter_objects("A zebra stands between rocks.", mentioned, 2, 7);
    CHECK(first.text == "A bison stands between shrubs.");
    CHECK(first.sampled_labels == second.sampled_labels);
    CHECK(first.sampled_labels.size() == 2);

    SUBCASE("k larger than the set clamps") {
      ObjectSet single = ObjectSet::from_labels({"zebra"});
      ScriptEntry alt = chat_entry({"replace these objects", "Description: Only a zebra."},
                                   "Only a horse.");
      MockServer srv(Script{{alt}});
      srv.start();
      ModelGateway gw(pipeline_roles(srv.base_url()));
      PairGenerator g(gw, prompts);
      auto out = g.alter_objects("Only a zebra.", single, 2, 1);
      CHECK(out.sampled_labels == std::vector<std::string>{"zebra"});
    }

    SUBCASE("persisting labels raise AlterationFailedError") {
      ScriptEntry sticky = chat_entry({"replace these objects", "Description: Still a zebra."},
                                      "Still a zebra everywhere.");
      MockServer srv(Script{{sticky}});
      srv.start();
      ModelGateway gw(pipeline_roles(srv.base_url()));
      PairGenerator g(gw, prompts);
      CHECK_THROWS_AS(g.alter_objects("Still a zebra.", ObjectSet::from_labels({"zebra"}), 1, 3),
                      AlterationFailedError);
    }
  }
}

TEST_CASE("build_pair_dataset routes records through all three paths") {
  // s1: weak negative hallucinates (deer not detected) -> retained
  // s2: negative consistent, judged Incorrect -> retained with note
  // s3: negative consistent, judged Correct -> altered chosen becomes negative
  // s4: no script entry for the weak call -> lenient failure
  Script script{{
      chat_entry({"model=weak-1", "img=i/1.png"}, "A deer in the field."),
      chat_entry({"entities extractor", "Description: A deer in the field."}, "Objects: deer, field"),
      detect_entry("i/1.png", {{"zebra", 0.9}, {"field", 0.9}}),

      chat_entry({"model=weak-1", "img=i/2.png"}, "Some kind of animal."),
      chat_entry({"entities extractor", "Description: Some kind of animal."}, "Objects: animal"),
      detect_entry("i/2.png", {{"animal", 0.9}, {"fence", 0.8}}),
      chat_entry({"Detected Objects:", "Response: Some kind of animal."}, "Incorrect"),

      chat_entry({"model=weak-1", "img=i/3.png"}, "A cat sits on a mat."),
      chat_entry({"entities extractor", "Description: A cat sits on a mat."}, "Objects: cat, mat"),
      detect_entry("i/3.png", {{"cat", 0.95}, {"mat", 0.9}}),
      chat_entry({"Detected Objects:", "Response: A cat sits on a mat."}, "Correct"),
      chat_entry({"entities extractor", "Description: A tabby cat rests on a red mat."},
                 "Objects: tabby cat, red mat"),
      chat_entry({"replace these objects", "Description: A tabby cat rests on a red mat."},
                 "A beagle rests on a blue towel."),
  }};
  MockServer server(script);
  server.start();
  ModelGateway gateway(pipeline_roles(server.base_url()));
  PromptSet prompts;
  PairgenConfig config;
  config.workers = 3;
  PairGenerator gen(gateway, prompts, config);

  std::vector<RawSample> d0 = {
      raw("s1", "i/1.png", "Describe the image.", "A zebra in the field."),
      raw("s2", "i/2.png", "Describe the image.", "A horse by the fence."),
      raw("s3", "i/3.png", "Describe the image.", "A tabby cat rests on a red mat."),
      raw("s4", "i/4.png", "Describe the image.", "Unscripted."),
  };

  auto result = gen.build_pair_dataset(d0);
  REQUIRE(result.pairs.size() == 3);
  CHECK(result.manifest.failure_count() == 1);
  CHECK(result.pairs.size() + result.manifest.failure_count() == d0.size());

  CHECK(result.pairs[0].id == "s1");
  CHECK(result.pairs[0].provenance == Provenance::hallucination_retained);
  CHECK(result.pairs[0].rejected == "A deer in the field.");
  CHECK(result.pairs[0].mentioned_objects.labels() == std::vector<std::string>{"deer", "field"});
  CHECK(result.pairs[0].detected_objects.contains("zebra"));

  CHECK(result.pairs[1].id == "s2");
  CHECK(result.pairs[1].provenance == Provenance::hallucination_retained);
  CHECK(result.pairs[1].rejected == "Some kind of animal.");

  CHECK(result.pairs[2].id == "s3");
  CHECK(result.pairs[2].provenance == Provenance::object_altered);
  CHECK(result.pairs[2].rejected == "A beagle rests on a blue towel.");
  CHECK(result.pairs[2].label == Verdict::no);

  // every hallucination-retained record carries its missing labels in the note
  CHECK(result.manifest.records()[0].note.find("missing: deer") != std::string::npos);
  CHECK(result.manifest.records()[3].status == "failed");

  SUBCASE("strict mode aborts on the first failure with context") {
    PairgenConfig strict = config;
    strict.strict = true;
    PairGenerator strict_gen(gateway, prompts, strict);
    CHECK_THROWS_WITH_AS(strict_gen.build_pair_dataset(d0),
                         doctest::Contains("record 3 (id s4)"), Error);
  }

  SUBCASE("empty input produces empty output and zero counts") {
    auto empty = gen.build_pair_dataset({});
    CHECK(empty.pairs.empty());
    CHECK(empty.manifest.failure_count() == 0);
  }

  SUBCASE("fixed seed and script give byte-identical outputs and manifests") {
    server.reset_counters();
    auto rerun = gen.build_pair_dataset(d0);
    json a = json::array();
    for (const auto& p : result.pairs) a.push_back(p.to_json());
    json b = json::array();
    for (const auto& p : rerun.pairs) b.push_back(p.to_json());
    CHECK(a.dump() == b.dump());
    CHECK(result.manifest.lines() == rerun.manifest.lines());
  }
}
