#include "dialogcode/cli.hpp"

int main(int argc, char** argv) { return dialogcode::cli_main(argc, argv); }
