#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedbcs/federation.hpp"

namespace fedbcs {

/// One JSON object (single line) with the fields of RoundReport.
std::string round_report_json(const RoundReport& report);

/// Upload record: client_id, round, pathway, class_id, support, d_fused,
/// vector.
std::string prototype_upload_json(int client_id, std::size_t round, const Prototype& p);

/// Broadcast record: per (class, pathway) the cluster count S, the
/// representatives and their mean.
std::string broadcast_json(std::size_t round, const GlobalPrototypeSet& set);

std::string summary_csv_header(std::size_t domains);
/// round, per-domain dice, avg dice. Unevaluated rounds leave the dice
/// cells empty.
std::string summary_csv_row(const RoundReport& report, std::size_t domains);

/// Final per-domain and average Dice in percent, one row per method.
struct DiceRow {
  std::string method;
  std::vector<Real> domain_dice;
  Real avg_dice = 0;
};
std::string format_dice_table(const std::vector<DiceRow>& rows);

/// Streams metrics.jsonl, summary.csv and prototypes.jsonl into `dir`.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& dir, std::size_t domains);

  void write(const RoundReport& report);

 private:
  std::size_t domains_;
  std::ofstream jsonl_;
  std::ofstream csv_;
  std::ofstream prototypes_;
};

}  // namespace fedbcs
