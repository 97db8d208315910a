package g;

public class Switches {

    public void cases(int x) {
        switch (x) {
            case 1:
            case 2:
                throw new IllegalArgumentException("one or two");
            case 3:
                break;
            default:
                return;
        }
    }

    public void fallback(int x) {
        switch (x) {
            case 0:
                return;
            case 4:
                return;
            default:
                throw new UnsupportedOperationException();
        }
    }
}
