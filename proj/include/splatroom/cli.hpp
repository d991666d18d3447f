#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace splatroom {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Command-line front end. args excludes the program name. Subcommands:
//   synth <spec|default> <out_dir>
//   init <manifest> [--delta --epsilon --k --config --out --random-seeds]
//   train <manifest> [--iters --config --out --init --log --checkpoint-dir]
//   render <checkpoint> <camera-id|all> <out_dir>
//   mesh <checkpoint> <manifest> <out.ply> [--voxel --trunc --config]
//   eval <pred.ply> <gt.ply> [--threshold --samples --seed --json]
//   verify [--seed --json --tolerance-scale]
// Usage errors are detected before any file is written.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace splatroom
