#pragma once

#include <filesystem>
#include <string>

#include "falldet/abod.hpp"
#include "falldet/svm.hpp"

namespace falldet {

// Versioned flat-text model container (see docs/formats.md). Numbers are
// written in shortest round-trip form, so save/load is lossless.

enum class ModelKind { Abod, Svm };

std::string serialize_model(const AbodModel& m);
std::string serialize_model(const SvmModel& m);

void save_model(const AbodModel& m, const std::filesystem::path& path);
void save_model(const SvmModel& m, const std::filesystem::path& path);

ModelKind peek_model_kind(const std::filesystem::path& path);

AbodModel load_abod_model(const std::filesystem::path& path);
SvmModel load_svm_model(const std::filesystem::path& path);

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace falldet
