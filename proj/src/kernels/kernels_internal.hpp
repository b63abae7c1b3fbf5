// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lfme/kernels.hpp"

namespace lfme::kernels::detail {

extern const KernelTable kScalarTable;

// Defined in the ISA-specific translation units; nullptr when not built.
const KernelTable* avx2_table_if_built();
const KernelTable* neon_table_if_built();

}  // namespace lfme::kernels::detail
