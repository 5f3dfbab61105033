#include "avseg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "avseg/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace avseg {

std::vector<SensitivityRow> report_rows_from_json(const json& j) {
    check_data(j.contains("rows") && j.at("rows").is_array(), "report input missing 'rows' array");
    std::vector<SensitivityRow> rows;
    for (const auto& r : j.at("rows")) {
        SensitivityRow row;
        row.level = r.at("level").get<std::string>();
        row.prior_quality = r.at("prior_quality").get<double>();
        row.miou = r.at("miou").get<double>();
        row.fscore = r.at("fscore").get<double>();
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_svg(const std::vector<SensitivityRow>& rows, const fs::path& path) {
    const double W = 640, H = 420, ml = 70, mr = 30, mt = 40, mb = 60;
    const double pw = W - ml - mr, ph = H - mt - mb;
    double x_lo = 1e9, x_hi = -1e9;
    for (const auto& r : rows) {
        x_lo = std::min(x_lo, r.prior_quality);
        x_hi = std::max(x_hi, r.prior_quality);
    }
    if (rows.size() <= 1 || x_hi - x_lo < 1e-12) {
        x_lo -= 0.05;
        x_hi += 0.05;
    }
    auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return mt + (1.0 - y) * ph; };

    std::ofstream os(path);
    check_data(os.is_open(), "cannot write plot " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double y = static_cast<double>(i) / 5.0;
        os << "<text x=\"" << ml - 40 << "\" y=\"" << py(y) + 4 << "\" font-size=\"12\">" << y << "</text>\n";
        os << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << ml << "\" y2=\"" << py(y)
           << "\" stroke=\"black\"/>\n";
    }
    std::vector<SensitivityRow> sorted(rows);
    std::sort(sorted.begin(), sorted.end(),
              [](const SensitivityRow& a, const SensitivityRow& b) { return a.prior_quality < b.prior_quality; });
    auto polyline = [&](auto get, const char* color, const char* dash) {
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << " points=\"";
        for (const auto& r : sorted) os << px(r.prior_quality) << "," << py(get(r)) << " ";
        os << "\"/>\n";
    };
    polyline([](const SensitivityRow& r) { return r.miou; }, "#1f77b4", "");
    polyline([](const SensitivityRow& r) { return r.fscore; }, "#d62728", " stroke-dasharray=\"6,4\"");
    for (const auto& r : sorted) {
        os << "<circle cx=\"" << px(r.prior_quality) << "\" cy=\"" << py(r.miou)
           << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
        os << "<text x=\"" << px(r.prior_quality) - 10 << "\" y=\"" << mt + ph + 20 << "\" font-size=\"11\">"
           << r.level << "</text>\n";
    }
    os << "<text x=\"" << ml << "\" y=\"20\" font-size=\"14\">mIoU (solid) and F-score (dashed) vs "
          "stepping-stone quality</text>\n";
    os << "</svg>\n";
}

}  // namespace

void write_report(const std::vector<SensitivityRow>& rows, const fs::path& outdir) {
    check_config(!rows.empty(), "report needs at least one row");
    fs::create_directories(outdir);

    {
        std::ofstream os(outdir / "plot_data.csv");
        check_data(os.is_open(), "cannot write plot_data.csv");
        os << "level,prior_quality,miou,fscore\n";
        for (const auto& r : rows)
            os << r.level << "," << g17(r.prior_quality) << "," << g17(r.miou) << "," << g17(r.fscore) << "\n";
    }
    {
        std::ofstream os(outdir / "summary.txt");
        check_data(os.is_open(), "cannot write summary.txt");
        os << "level               prior_quality   mIoU      F-score\n";
        for (const auto& r : rows) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%-19s %-15.4f %-9.4f %-9.4f\n", r.level.c_str(), r.prior_quality,
                          r.miou, r.fscore);
            os << buf;
        }
    }
    write_svg(rows, outdir / "plot.svg");
}

}  // namespace avseg
