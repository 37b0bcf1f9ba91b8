/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Dataset files: CSV with header x_1..x_d,y[,relevant] and the IDX format.

#ifndef COPSEL_IO_HPP_
#define COPSEL_IO_HPP_

#include <filesystem>

#include "copsel/dataset.hpp"

namespace copsel {

// `relevant` is written as 1-based indices joined by '|'. Values use the
// shortest text that reads back to the same double.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

// The class count is max(y) + 1, at least 2. Throws FormatError on a bad
// header, ragged rows or unparsable cells; IoError when unreadable.
Dataset read_dataset_csv(const std::filesystem::path& path);

// Big-endian IDX: images 0x00000803 with [n, rows, cols] u8 pixels scaled
// by 1/255, labels 0x00000801 with [n] u8. Class count is 10.
Dataset parse_idx(const std::filesystem::path& images,
                  const std::filesystem::path& labels);

}  // namespace copsel

#endif  // COPSEL_IO_HPP_
