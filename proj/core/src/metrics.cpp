#include "fedbcs/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "fedbcs/errors.hpp"
#include "json.hpp"

namespace fedbcs {

namespace {

using nlohmann::json;

json vector_json(const Tensor& t) { return json(t.values()); }

}  // namespace

std::string round_report_json(const RoundReport& r) {
  json j;
  j["round"] = r.round;
  json clients = json::array();
  for (const auto& c : r.clients) {
    clients.push_back({{"client_id", c.client_id},
                       {"dice_loss", c.dice},
                       {"contra_loss", c.contra},
                       {"consis_loss", c.consis},
                       {"total_loss", c.total},
                       {"grad_sq_norm", c.grad_sq_norm},
                       {"uploads", c.uploads},
                       {"steps", c.steps}});
  }
  j["clients"] = std::move(clients);
  j["evaluated"] = r.evaluated;
  if (r.evaluated) {
    j["domain_dice"] = r.domain_dice;
    j["avg_dice"] = r.avg_dice;
  }
  j["total_uploads"] = r.total_uploads;
  if (r.descent_ok) j["descent_ok"] = *r.descent_ok;
  return j.dump();
}

std::string prototype_upload_json(int client_id, std::size_t round, const Prototype& p) {
  json j{{"client_id", client_id},
         {"round", round},
         {"pathway", to_string(p.pathway)},
         {"class_id", p.class_id},
         {"support", p.support},
         {"d_fused", p.vector.size()},
         {"vector", vector_json(p.vector)}};
  return j.dump();
}

std::string broadcast_json(std::size_t round, const GlobalPrototypeSet& set) {
  json entries = json::array();
  for (const auto& [key, g] : set.entries) {
    json reps = json::array();
    for (const auto& r : g.representatives) reps.push_back(vector_json(r));
    entries.push_back({{"class_id", key.first},
                       {"pathway", to_string(key.second)},
                       {"S", g.representatives.size()},
                       {"representatives", std::move(reps)},
                       {"mean", vector_json(g.mean)}});
  }
  return json{{"round", round}, {"prototypes", std::move(entries)}}.dump();
}

std::string summary_csv_header(std::size_t domains) {
  std::string h = "round";
  for (std::size_t d = 0; d < domains; ++d) h += ",dice_domain" + std::to_string(d);
  return h + ",avg_dice";
}

std::string summary_csv_row(const RoundReport& r, std::size_t domains) {
  std::ostringstream row;
  row.precision(6);
  row << r.round;
  for (std::size_t d = 0; d < domains; ++d) {
    row << ',';
    if (r.evaluated) row << r.domain_dice.at(d);
  }
  row << ',';
  if (r.evaluated) row << r.avg_dice;
  return row.str();
}

std::string format_dice_table(const std::vector<DiceRow>& rows) {
  std::size_t domains = 0;
  for (const auto& r : rows) domains = std::max(domains, r.domain_dice.size());
  std::ostringstream out;
  char cell[32];
  std::snprintf(cell, sizeof cell, "%-16s", "Method");
  out << cell;
  for (std::size_t d = 0; d < domains; ++d) {
    std::snprintf(cell, sizeof cell, "%9s", ("Site" + std::to_string(d + 1)).c_str());
    out << cell;
  }
  out << "      Avg\n";
  for (const auto& r : rows) {
    std::snprintf(cell, sizeof cell, "%-16s", r.method.c_str());
    out << cell;
    for (Real v : r.domain_dice) {
      std::snprintf(cell, sizeof cell, "%9.2f", static_cast<double>(100 * v));
      out << cell;
    }
    std::snprintf(cell, sizeof cell, "%9.2f", static_cast<double>(100 * r.avg_dice));
    out << cell << '\n';
  }
  return out.str();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& dir, std::size_t domains) : domains_(domains) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("metrics: cannot create " + dir.string() + ": " + ec.message());
  jsonl_.open(dir / "metrics.jsonl");
  csv_.open(dir / "summary.csv");
  prototypes_.open(dir / "prototypes.jsonl");
  if (!jsonl_ || !csv_ || !prototypes_) throw IoError("metrics: cannot open output files in " + dir.string());
  csv_ << summary_csv_header(domains_) << '\n';
}

void MetricsWriter::write(const RoundReport& report) {
  jsonl_ << round_report_json(report) << '\n';
  csv_ << summary_csv_row(report, domains_) << '\n';
  for (std::size_t m = 0; m < report.uploads.size(); ++m) {
    for (const auto& p : report.uploads[m].prototypes) {
      prototypes_ << prototype_upload_json(report.clients.at(m).client_id, report.round, p) << '\n';
    }
  }
  if (!report.broadcast.empty()) prototypes_ << broadcast_json(report.round, report.broadcast) << '\n';
  jsonl_.flush();
  csv_.flush();
  prototypes_.flush();
  if (!jsonl_ || !csv_ || !prototypes_) throw IoError("metrics: write failed");
}

}  // namespace fedbcs
