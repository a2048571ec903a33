#pragma once

#include <filesystem>
#include <iosfwd>

#include "varigrad/model.hpp"

namespace varigrad {

// Text checkpoint of an Mlp. Values are written with 17 significant digits, so a
// save/load round trip reproduces every parameter bit for bit. See docs/checkpoint-format.md.

void write_checkpoint(std::ostream& out, const Mlp& model);
Mlp read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Mlp& model);
/// Throws IoError when the file is missing and FormatError when it does not parse.
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace varigrad
