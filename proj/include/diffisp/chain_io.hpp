#pragma once

#include <cstdint>
#include <string>

#include "diffisp/degrade.hpp"
#include "diffisp/filters.hpp"
#include "diffisp/gradient.hpp"

namespace diffisp {

// Number formatting shared by every JSON writer: shortest text that
// round-trips a double exactly (17 significant digits); non-finite values
// become null. Writers are hand-rolled so output bytes are deterministic.
std::string format_double(double v);

// Fixed field order: defog, wb, gamma, contrast, tone, sharpen. Stages
// missing from the chain serialize as their neutral values ("defog": null),
// which apply identically.
std::string chain_to_json(const FilterChain& chain);

// Strict reader: all six fields required, canonical field order enforced,
// values range-checked; errors carry the offending field path. The
// fit-result extras ("trace", "converged") are tolerated and ignored so a
// fit output doubles as a params file.
FilterChain chain_from_json(const std::string& text);

// Chain fields plus "trace": [[iter, loss], ...] and "converged".
std::string fit_result_to_json(const FitResult& r);

std::string gradcheck_report_to_json(const GradCheckReport& r);

// One JSON line: {"src","out","mode","k","gamma","seed"}; k only for fog,
// gamma only for lowlight, null otherwise.
struct ManifestEntry {
    std::string src;
    std::string out;
    DegradeSpec spec;
};
std::string manifest_line(const ManifestEntry& e);

std::string json_escape(const std::string& s);

}  // namespace diffisp
