#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bandsel {

// One training-trace record per epoch. On disk this is a CSV with header
//   epoch,loss,recognition_loss,group_penalty,norm_0,...,norm_{C-1},active_bands
// where loss and recognition_loss are means of the per-step objectives over
// the epoch, group_penalty and the per-band group norms are taken at the end
// of the epoch (after any pruning), and active_bands counts unmasked bands.
struct TraceRow {
    int epoch = 0;
    double loss = 0.0;
    double recognition_loss = 0.0;
    double group_penalty = 0.0;
    std::vector<double> band_norms;
    std::size_t active_bands = 0;
};

void write_trace(const std::string& path, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace(const std::string& path);

}  // namespace bandsel
