#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "tracecause/error.hpp"
#include "tracecause/manifest.hpp"

using namespace tracecause;
using namespace tracecause::testing;

namespace {

json minimal() {
  return json::parse(R"({
    "config_id": "exp",
    "datasets": [{"path": "cases/alg", "subset": "algorithm_generated"}],
    "pipeline": {"modules": ["m1", "m3"], "n_runs": 2, "mode": "record", "temperature": 0.2},
    "provider": {"endpoint": "https://example.invalid/chat/completions", "api_key_env": "MY_KEY"},
    "workers": 3
  })");
}

}  // namespace

TEST(Manifest, ParsesAndResolvesRelativePaths) {
  const auto m = manifest_from_json(minimal(), "/base/dir");
  EXPECT_EQ(m.config_id, "exp");
  ASSERT_EQ(m.datasets.size(), 1u);
  EXPECT_EQ(m.datasets[0].path, std::filesystem::path("/base/dir/cases/alg"));
  EXPECT_EQ(m.cache_dir, std::filesystem::path("/base/dir/cache"));
  EXPECT_EQ(m.pipeline.modules, (std::set<Module>{Module::m1, Module::m3}));
  EXPECT_EQ(m.pipeline.n_runs, 2);
  EXPECT_EQ(m.pipeline.mode, GatewayMode::record);
  EXPECT_DOUBLE_EQ(m.pipeline.temperature, 0.2);
  EXPECT_EQ(m.provider.api_key_env, "MY_KEY");
  EXPECT_EQ(m.workers, 3);
}

TEST(Manifest, RejectsInlineCredentialsAnywhere) {
  for (const char* path : {"/provider/api_key", "/provider/apiKey", "/provider/secret", "/provider/authorization",
                           "/embedder/token", "/provider/access_token", "/provider/adapter/password",
                           "/provider/aws_access_key"}) {
    json doc = minimal();
    doc[json::json_pointer(path)] = "sk-inline";
    EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError) << path;
  }
  json doc = minimal();
  doc["embedder"] = {{"kind", "lexical"}, {"dim", 64}, {"api_key_env", "EMBED_KEY"}};
  EXPECT_NO_THROW(manifest_from_json(doc, "/b"));
}

TEST(Manifest, RejectsUnknownKeysAndBadValues) {
  json doc = minimal();
  doc["colour"] = "blue";
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["pipeline"]["modulez"] = json::array();
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["pipeline"]["modules"] = {"m2"};
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["workers"] = 0;
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["config_id"] = "../escape";
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["pipeline"]["mode"] = "sometimes";
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
  doc = minimal();
  doc["workers"] = "many";
  EXPECT_THROW(manifest_from_json(doc, "/b"), ConfigError);
}

TEST(Manifest, InputChecksAndCaseLoading) {
  const auto dir = scratch_dir("manifest");
  json doc = minimal();
  doc["datasets"] = json::array({{{"path", (fixture_dir() / "cases/algorithm_generated").string()}},
                                 {{"path", (fixture_dir() / "cases/hand_crafted").string()}, {"subset", "hand_crafted"}}});
  doc["pipeline"]["mode"] = "replay";
  doc["transcript"] = fixture_transcript().string();
  { std::ofstream(dir / "m.json") << doc.dump(2); }
  const auto m = load_manifest(dir / "m.json");
  EXPECT_THROW(check_inputs(m), ConfigError);  // no knowledge base under dir/kb yet
  const auto cases = load_manifest_cases(m);
  EXPECT_EQ(cases.size(), 4u);

  doc["datasets"].push_back({{"path", (fixture_dir() / "cases/hand_crafted").string()}, {"subset", "hand_crafted"}});
  EXPECT_THROW(load_manifest_cases(manifest_from_json(doc, dir)), IntegrityError);
  { std::ofstream(dir / "bad.json") << "{ not json"; }
  EXPECT_THROW(load_manifest(dir / "bad.json"), ConfigError);
}
