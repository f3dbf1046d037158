#include "irnn/cli.hpp"

int main(int argc, char** argv) { return irnn::run_cli(argc, argv); }
