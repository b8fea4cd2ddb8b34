#pragma once

namespace dialogcode {

// Entry point of the dialogcode executable. Returns 0 on success or a
// passing gate, 2 when a gate fails, 1 on any error.
int cli_main(int argc, char** argv);

}  // namespace dialogcode
