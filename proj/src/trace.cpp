#include "bandsel/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bandsel/errors.hpp"

namespace bandsel {

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace

void write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open trace file for writing: " + path);
    const std::size_t bands = rows.empty() ? 0 : rows.front().band_norms.size();
    out << "epoch,loss,recognition_loss,group_penalty";
    for (std::size_t c = 0; c < bands; ++c) out << ",norm_" << c;
    out << ",active_bands\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << fmt(r.loss) << ',' << fmt(r.recognition_loss) << ','
            << fmt(r.group_penalty);
        for (double n : r.band_norms) out << ',' << fmt(n);
        out << ',' << r.active_bands << '\n';
    }
}

std::vector<TraceRow> read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open trace file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("epoch,", 0) != 0)
        throw DataFormatError("trace file missing header: " + path);
    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5)
            throw DataFormatError("trace row too short in " + path);
        TraceRow r;
        r.epoch = std::stoi(cells[0]);
        r.loss = std::stod(cells[1]);
        r.recognition_loss = std::stod(cells[2]);
        r.group_penalty = std::stod(cells[3]);
        for (std::size_t i = 4; i + 1 < cells.size(); ++i)
            r.band_norms.push_back(std::stod(cells[i]));
        r.active_bands = static_cast<std::size_t>(std::stoul(cells.back()));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace bandsel
