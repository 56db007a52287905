#pragma once

namespace polycoord {

// Entry point of the simulation CLI; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace polycoord
