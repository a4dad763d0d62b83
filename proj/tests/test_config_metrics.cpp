#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fedbcs/config.hpp"
#include "fedbcs/errors.hpp"
#include "fedbcs/metrics.hpp"
#include "json.hpp"

namespace fedbcs {
namespace {

using nlohmann::json;

std::string config_error(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, EveryFieldRoundTrips) {
  RunConfig c;
  c.federation.clients = 5;
  c.federation.rounds = 7;
  c.federation.local_epochs = 2;
  c.federation.batch_size = 3;
  c.federation.optimizer.kind = OptimizerKind::kAdam;
  c.federation.optimizer.learning_rate = 1e-4;
  c.federation.optimizer.weight_decay = 0.3;
  c.federation.loss.lambda_c = 0.125;
  c.federation.loss.tau = 0.005;
  c.federation.seed = 123456789012345ULL;
  c.federation.method = Method::kFedBcsNoCdpa;
  c.federation.net.level_channels = {4, 8, 16, 32};
  c.federation.net.tap_layers = {"enc2", "enc3", "dec1", "dec2"};
  c.federation.net.fused_dim = 12;
  c.federation.server.distance = DistanceKind::kEuclidean;
  c.federation.server.finch_level = 2;
  c.federation.parallelism = 4;
  c.federation.eval_every = 5;
  c.federation.theory_monitor = true;
  c.federation.augment = true;
  c.data = DataSpec{32, 9, 4};
  c.out_dir = "some/dir";
  c.checked = false;
  c.dump_data = true;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig c = parse_config("# comment\n[federation]\nrounds = 3  # trailing\n\n[loss]\nlambda_c = 0.5\n");
  EXPECT_EQ(c.federation.rounds, 3u);
  EXPECT_EQ(c.federation.loss.lambda_c, 0.5);
  EXPECT_EQ(c.federation.clients, RunConfig{}.federation.clients);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_NE(config_error("[federation]\nclients = four\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("[nope]\n").find("line 1"), std::string::npos);
  EXPECT_NE(config_error("\n\n[federation]\nbogus = 1\n").find("line 4"), std::string::npos);
  EXPECT_NE(config_error("rounds = 3\n").find("line 1"), std::string::npos);
  EXPECT_NE(config_error("[federation]\nrounds 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("[federation]\nmethod = fedprox\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("[run]\nchecked = maybe\n").find("line 2"), std::string::npos);
}

TEST(Config, LoadMissingFileIsError) {
  EXPECT_ANY_THROW(load_config("/nonexistent/fedbcs.ini"));
}

RoundReport sample_report() {
  RoundReport r;
  r.round = 4;
  ClientRoundStats s;
  s.client_id = 1;
  s.dice = 0.25;
  s.contra = 0.5;
  s.consis = 0.125;
  s.total = 0.875;
  s.uploads = 4;
  s.steps = 3;
  r.clients.push_back(s);
  r.total_uploads = 4;
  r.evaluated = true;
  r.domain_dice = {0.5, 0.75};
  r.avg_dice = 0.625;
  return r;
}

TEST(Metrics, RoundReportJsonFields) {
  const json j = json::parse(round_report_json(sample_report()));
  EXPECT_EQ(j["round"], 4);
  EXPECT_EQ(j["total_uploads"], 4);
  EXPECT_EQ(j["avg_dice"], 0.625);
  EXPECT_EQ(j["domain_dice"][1], 0.75);
  EXPECT_EQ(j["clients"][0]["client_id"], 1);
  EXPECT_EQ(j["clients"][0]["contra_loss"], 0.5);
  EXPECT_EQ(j["clients"][0]["uploads"], 4);
  EXPECT_FALSE(j.contains("descent_ok"));
}

TEST(Metrics, UnevaluatedRoundOmitsDice) {
  RoundReport r = sample_report();
  r.evaluated = false;
  const json j = json::parse(round_report_json(r));
  EXPECT_FALSE(j.contains("avg_dice"));
  const std::string row = summary_csv_row(r, 2);
  EXPECT_EQ(row.rfind("4,", 0), 0u);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 3);
}

TEST(Metrics, PrototypeUploadJson) {
  const Prototype p{1, Pathway::kDecoder, Tensor::vector({0.5, -1}), 37};
  const json j = json::parse(prototype_upload_json(2, 9, p));
  EXPECT_EQ(j["client_id"], 2);
  EXPECT_EQ(j["round"], 9);
  EXPECT_EQ(j["pathway"], "dec");
  EXPECT_EQ(j["class_id"], 1);
  EXPECT_EQ(j["support"], 37);
  EXPECT_EQ(j["d_fused"], 2);
  EXPECT_EQ(j["vector"][1], -1);
}

TEST(Metrics, BroadcastJsonCarriesClusterCountAndMean) {
  GlobalPrototypeSet set;
  set.entries[{0, Pathway::kEncoder}] =
      GlobalClassPrototypes{{Tensor::vector({1, 0}), Tensor::vector({0, 1})}, Tensor::vector({0.5, 0.5})};
  const json j = json::parse(broadcast_json(3, set));
  const std::string text = j.dump();
  EXPECT_NE(text.find("0.5"), std::string::npos);
  EXPECT_NE(text.find("\"S\":2"), std::string::npos) << text;
}

TEST(Metrics, CsvHeaderAndRow) {
  EXPECT_EQ(summary_csv_header(2), "round,dice_domain0,dice_domain1,avg_dice");
  const std::string row = summary_csv_row(sample_report(), 2);
  EXPECT_EQ(row.rfind("4,0.5", 0), 0u) << row;
}

TEST(Metrics, DiceTableListsMethodsInPercent) {
  const std::string table = format_dice_table({{"fedavg", {0.5, 0.7}, 0.6}, {"fedbcs", {0.8, 0.9}, 0.85}});
  EXPECT_NE(table.find("fedavg"), std::string::npos);
  EXPECT_NE(table.find("60.00"), std::string::npos);
  EXPECT_NE(table.find("85.00"), std::string::npos);
}

TEST(Metrics, WriterProducesThreeFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "fedbcs_metrics_test";
  std::filesystem::remove_all(dir);
  {
    MetricsWriter w(dir, 2);
    w.write(sample_report());
  }
  for (const char* name : {"metrics.jsonl", "summary.csv", "prototypes.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  std::ifstream csv(dir / "summary.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, summary_csv_header(2));
  EXPECT_EQ(row, summary_csv_row(sample_report(), 2));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fedbcs
