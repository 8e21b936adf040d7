#include "wfda/cli.hpp"

int main(int argc, char** argv) { return wfda::run_cli(argc, argv); }
