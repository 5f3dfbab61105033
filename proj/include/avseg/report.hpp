#pragma once

#include <filesystem>
#include <vector>

#include "avseg/pipeline.hpp"

namespace avseg {

// Renders merged sensitivity rows into outdir: summary.txt (aligned table),
// plot_data.csv (the exact numbers, one row per input point) and plot.svg
// (mIoU and F-score against prior quality). Tests assert on the CSV.
void write_report(const std::vector<SensitivityRow>& rows, const std::filesystem::path& outdir);

std::vector<SensitivityRow> report_rows_from_json(const nlohmann::json& j);

}  // namespace avseg
