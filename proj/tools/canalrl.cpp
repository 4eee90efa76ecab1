#include "canalrl/cli.hpp"

int main(int argc, char** argv) { return canalrl::cli::run(argc, argv); }
