#include "adapcr/cli.hpp"

int main(int argc, char** argv) { return adapcr::run_cli(argc, argv); }
